#pragma once

// Data behind the optimal-detuning curves (fig2) and the squeezing maps over
// measurement strength, bath occupation and efficiency (fig3).

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "mechsqueeze/analytic.hpp"
#include "mechsqueeze/io.hpp"
#include "mechsqueeze/optimize.hpp"
#include "mechsqueeze/parallel.hpp"
#include "mechsqueeze/sweep.hpp"

namespace mechsqueeze {

struct Fig2Options {
  std::vector<double> occupations{0.0, 1.0, 10.0, 100.0, 1000.0};
  double mu = 0.1;
  double eta = 1.0;
  double chi_prime_min = 0.05;
  double chi_prime_max = 20.0;
  int points = 120;
  int jobs = 1;
  OptimizeOptions optimize;
};

struct Fig2Curve {
  std::string name;  ///< file stem
  double n_thermal = std::numeric_limits<double>::quiet_NaN();  ///< NaN for reference curves
  CsvTable table;    ///< columns chi_prime, v_ratio, delta_offset_prime
};

/// Numeric optimum at chi' for bath occupation n (gamma = 1).
inline std::pair<double, double> fig2_point(double chi_prime, double n, const Fig2Options& opts) {
  SystemParams p;
  p.mu = opts.mu;
  p.eta = opts.eta;
  p.n_thermal = n;
  const double z = 8.0 * p.eta * p.mu * p.gamma * (n + p.mu / (2.0 * p.gamma) + 0.5);
  const double s = std::sqrt(p.gamma * p.gamma + z);
  p.chi = chi_prime * s;
  const auto vp = validate(p);
  const auto r = optimal_detuning(vp, opts.optimize);
  return {r.v_x_opt / v0(vp), r.delta_opt / s - chi_prime};
}

/// Numeric curves for each occupation followed by the no-measurement exact
/// curve and the strong-conditioning analytic curve, all on the same chi' grid.
inline std::vector<Fig2Curve> fig2_curves(const Fig2Options& opts = {}) {
  const auto grid = log_grid(opts.chi_prime_min, opts.chi_prime_max,
                             static_cast<std::size_t>(std::max(opts.points, 2)));
  const std::vector<std::string> columns{"chi_prime", "v_ratio", "delta_offset_prime"};
  const std::size_t nc = opts.occupations.size();
  const std::size_t ng = grid.size();

  std::vector<Fig2Curve> curves(nc + 2);
  for (std::size_t c = 0; c < nc; ++c) {
    SystemParams p;
    p.mu = opts.mu;
    p.eta = opts.eta;
    p.n_thermal = opts.occupations[c];
    curves[c].name = "fig2_N" + format_number(opts.occupations[c]);
    curves[c].n_thermal = opts.occupations[c];
    curves[c].table.comments = {"mechsqueeze " + std::string(kVersion),
                                "numeric optimum over delta at theta=pi/4; chi = chi_prime sqrt(gamma^2 + z)",
                                "gamma=" + format_number(p.gamma) + " mu=" + format_number(p.mu) +
                                    " eta=" + format_number(p.eta) + " n=" + format_number(p.n_thermal)};
    curves[c].table.columns = columns;
    curves[c].table.rows.assign(ng, {});
  }
  parallel_for(nc * ng, opts.jobs, [&](std::size_t idx) {
    const std::size_t c = idx / ng;
    const std::size_t i = idx % ng;
    const auto [ratio, offset] = fig2_point(grid[i], opts.occupations[c], opts);
    curves[c].table.rows[i] = {grid[i], ratio, offset};
  });

  auto& none = curves[nc];
  none.name = "fig2_no_measurement";
  none.table.comments = {"mechsqueeze " + std::string(kVersion),
                         "exact optimum without measurement: mu=0, chi_prime=chi/gamma"};
  none.table.columns = columns;
  auto& limit = curves[nc + 1];
  limit.name = "fig2_analytic";
  limit.table.comments = {"mechsqueeze " + std::string(kVersion),
                          "strong-conditioning limit z >> gamma^2"};
  limit.table.columns = columns;
  for (double cp : grid) {
    none.table.rows.push_back({cp, no_measurement_ratio(cp), 1.0});
    const auto a = analytic_optimum(cp);
    limit.table.rows.push_back({cp, a.v_ratio, a.delta_offset_prime});
  }
  return curves;
}

struct Fig3Options {
  int resolution = 64;
  double chi = 50.0;
  double mu_min = 0.01;
  double mu_max = 10.0;
  double n_min = 0.01;
  double n_max = 10.0;
  double eta_min = 0.1;
  double eta_max = 1.0;
  int jobs = 1;
  OptimizeOptions optimize;
};

/// Panels a/c are the optimally detuned DMPA variance, b/d the BAE variance;
/// a/b span (mu, n) at eta = 1, c/d span (mu, eta) at n = 0.
inline SweepSpec fig3_spec(char panel, const Fig3Options& opts = {}) {
  if (panel < 'a' || panel > 'd') {
    throw Error(ErrorCode::InvalidSpec, std::string("unknown fig3 panel '") + panel + "'");
  }
  const auto res = static_cast<std::size_t>(opts.resolution);
  SweepSpec spec;
  spec.fixed.gamma = 1.0;
  spec.fixed.chi = opts.chi;
  spec.fixed.theta = std::numbers::pi / 4;
  spec.objective = (panel == 'a' || panel == 'c') ? Objective::VxOptimalDelta : Objective::Bae;
  spec.axis1 = {"mu", log_grid(opts.mu_min, opts.mu_max, res)};
  if (panel == 'a' || panel == 'b') {
    spec.fixed.eta = 1.0;
    spec.axis2 = SweepAxis{"n", log_grid(opts.n_min, opts.n_max, res)};
  } else {
    spec.fixed.n_thermal = 0.0;
    spec.axis2 = SweepAxis{"eta", linear_grid(opts.eta_min, opts.eta_max, res)};
  }
  return spec;
}

inline const std::vector<ThresholdColumn>& fig3_thresholds() {
  static const std::vector<ThresholdColumn> t{{"below_zero_point", 0.5}, {"below_half_zero_point", 0.25}};
  return t;
}

inline SweepResult fig3_panel(char panel, const Fig3Options& opts = {}) {
  return run_sweep(fig3_spec(panel, opts), SweepOptions{opts.jobs, opts.optimize});
}

}  // namespace mechsqueeze
