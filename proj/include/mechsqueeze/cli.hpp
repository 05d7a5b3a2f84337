#pragma once

// Command-line front end. run_cli is the whole program; main() only forwards
// argv and the standard streams.

#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mechsqueeze/analytic.hpp"
#include "mechsqueeze/dynamics.hpp"
#include "mechsqueeze/errors.hpp"
#include "mechsqueeze/figures.hpp"
#include "mechsqueeze/io.hpp"
#include "mechsqueeze/model.hpp"
#include "mechsqueeze/optimize.hpp"
#include "mechsqueeze/parallel.hpp"
#include "mechsqueeze/steadystate.hpp"
#include "mechsqueeze/sweep.hpp"

namespace mechsqueeze {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitDomain = 2, kExitNoConvergence = 3 };

inline int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::NoConvergence: return kExitNoConvergence;
    case ErrorCode::InvalidSpec:
    case ErrorCode::Io:
    case ErrorCode::ParamsMismatch: return kExitUsage;
    default: return kExitDomain;
  }
}

inline constexpr const char* kDbLabel = "squeezing dB, positive = below zero-point";

namespace cli_detail {

struct ParamFlags {
  SystemParams p;
  std::optional<double> omega_m;
  std::optional<double> quality;
  std::optional<double> spring_ratio;
};

inline void add_param_flags(CLI::App* app, ParamFlags& f) {
  app->add_option("--gamma", f.p.gamma, "Damping rate")->capture_default_str();
  app->add_option("--chi", f.p.chi, "Parametric nonlinearity")->capture_default_str();
  app->add_option("--delta", f.p.delta, "Pump half-detuning")->capture_default_str();
  app->add_option("--theta", f.p.theta, "Drive phase relative to the lock-in reference")
      ->capture_default_str();
  app->add_option("--mu", f.p.mu, "Measurement rate")->capture_default_str();
  app->add_option("--eta", f.p.eta, "Detection efficiency")->capture_default_str();
  app->add_option("--n", f.p.n_thermal, "Mean bath phonon number")->capture_default_str();
  auto* g = app->add_option_group("physical", "Set chi from device parameters (gamma = 1 units)");
  g->add_option("--omega-m", f.omega_m, "Mechanical angular frequency");
  g->add_option("--quality", f.quality, "Quality factor omega_m / gamma");
  g->add_option("--spring-ratio", f.spring_ratio, "Spring modulation ratio k_r / k_0");
}

/// Applies the physical mapping when any physical flag was given; warnings go
/// to err.
inline ValidatedParams resolve_params(const ParamFlags& f, std::ostream& err) {
  SystemParams p = f.p;
  if (f.omega_m || f.quality || f.spring_ratio) {
    if (!(f.omega_m && f.quality && f.spring_ratio)) {
      throw Error(ErrorCode::InvalidSpec,
                  "--omega-m, --quality and --spring-ratio must be given together");
    }
    const auto m = from_physical({*f.omega_m, *f.quality, *f.spring_ratio}, p);
    for (const auto& w : m.warnings) err << "warning: " << w << '\n';
    p = m.params;
  }
  return validate(p);
}

inline std::string fmt(double v) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << std::setprecision(12) << v;
  return os.str();
}

inline void write_json(const std::string& path, const nlohmann::json& j, std::ostream& out) {
  if (path == "-") {
    out << j.dump(2) << '\n';
  } else {
    write_file(path, j.dump(2) + '\n');
  }
}

inline bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

inline nlohmann::json cov_json(const CovarianceState& c) {
  return {{"v_x", c.v_x}, {"v_y", c.v_y}, {"c", c.c}};
}

inline void print_instability(const ValidatedParams& vp, std::ostream& out) {
  const auto& p = vp.get();
  const auto [l1, l2] = drift_eigenvalues(vp);
  out << "stable     = no\n"
      << "unstable: chi^2 >= delta^2 + gamma^2\n"
      << "chi^2      = " << fmt(p.chi * p.chi) << '\n'
      << "delta^2 + gamma^2 = " << fmt(p.delta * p.delta + p.gamma * p.gamma) << '\n'
      << "eigenvalues = " << fmt(l1.real()) << (l1.imag() < 0 ? " - " : " + ")
      << fmt(std::abs(l1.imag())) << "i, " << fmt(l2.real()) << (l2.imag() < 0 ? " - " : " + ")
      << fmt(std::abs(l2.imag())) << "i\n";
}

struct SteadyCmd {
  ParamFlags flags;
  bool optimize_delta = false;
  std::string out_path;
};

inline int run_steady(const SteadyCmd& cmd, std::ostream& out, std::ostream& err) {
  ValidatedParams vp = resolve_params(cmd.flags, err);
  std::optional<OptimizationResult> opt;
  if (cmd.optimize_delta) {
    opt = optimal_detuning(vp);
    vp = vp.with_delta(opt->delta_opt);
  }
  if (!is_stable(vp)) {
    print_instability(vp, out);
    err << "error: unstable: chi^2 >= delta^2 + gamma^2\n";
    return kExitDomain;
  }
  const auto r = conditional_steady_state(vp);
  const auto pv = principal_variances(r.cov);
  const double db = to_db(r.cov.v_x);
  const double v0_val = v0(vp);
  const double bae = bae_variance(vp);

  out << "delta      = " << fmt(vp->delta) << (opt ? " (optimized)" : "") << '\n'
      << "V_X        = " << fmt(r.cov.v_x) << '\n'
      << "V_Y        = " << fmt(r.cov.v_y) << '\n'
      << "C          = " << fmt(r.cov.c) << '\n'
      << "det V      = " << fmt(r.cov.det()) << '\n'
      << kDbLabel << ": " << fmt(db) << '\n'
      << "stable     = yes\n"
      << "residual   = " << fmt(r.residual) << '\n'
      << "method     = " << to_string(r.method) << " (" << r.iterations << " iterations)\n"
      << "v0         = " << fmt(v0_val) << '\n'
      << "bae        = " << fmt(bae) << '\n'
      << "principal  = " << fmt(pv.v_min) << ", " << fmt(pv.v_max) << " (minor axis angle "
      << fmt(pv.angle) << ")\n";

  if (!cmd.out_path.empty()) {
    nlohmann::json j{{"version", kVersion},
                     {"params", params_to_json(vp.get())},
                     {"optimized_delta", opt.has_value()},
                     {"covariance", cov_json(r.cov)},
                     {"det", r.cov.det()},
                     {"v_db", db},
                     {"stable", true},
                     {"residual", r.residual},
                     {"method", to_string(r.method)},
                     {"iterations", r.iterations},
                     {"v0", v0_val},
                     {"bae", bae},
                     {"principal", {{"v_min", pv.v_min}, {"v_max", pv.v_max}, {"angle", pv.angle}}}};
    write_json(cmd.out_path, j, out);
  }
  return kExitOk;
}

struct OptimizeCmd {
  ParamFlags flags;
  bool optimize_mu = false;
  double mu_min = 1e-3;
  double mu_max = 10.0;
  std::string out_path;
};

inline int run_optimize(const OptimizeCmd& cmd, std::ostream& out, std::ostream& err) {
  const ValidatedParams vp = resolve_params(cmd.flags, err);
  const auto r = cmd.optimize_mu ? optimal_measurement(vp, cmd.mu_min, cmd.mu_max)
                                 : optimal_detuning(vp);
  SystemParams at = vp.get();
  at.theta = std::numbers::pi / 4;
  at.delta = r.delta_opt;
  if (r.mu_opt) at.mu = *r.mu_opt;

  out << "delta_opt  = " << fmt(r.delta_opt) << '\n';
  if (r.mu_opt) out << "mu_opt     = " << fmt(*r.mu_opt) << '\n';
  out << "v_x_opt    = " << fmt(r.v_x_opt) << '\n'
      << kDbLabel << ": " << fmt(r.v_db) << '\n'
      << "V_Y        = " << fmt(r.cov.v_y) << '\n'
      << "C          = " << fmt(r.cov.c) << '\n'
      << "bracket    = [" << fmt(r.bracket.first) << ", " << fmt(r.bracket.second) << "]\n"
      << "evaluations = " << r.evaluations << '\n';
  if (r.flat) out << "note: objective does not depend on delta (chi = 0)\n";
  if (r.multimodal) err << "warning: pre-scan found more than one local minimum\n";
  if (!r.curvature_ok) err << "warning: negative curvature at the reported optimum\n";

  if (!cmd.out_path.empty()) {
    nlohmann::json j{{"version", kVersion},
                     {"params", params_to_json(at)},
                     {"delta_opt", r.delta_opt},
                     {"mu_opt", r.mu_opt ? nlohmann::json(*r.mu_opt) : nlohmann::json(nullptr)},
                     {"v_x_opt", r.v_x_opt},
                     {"v_db", r.v_db},
                     {"covariance", cov_json(r.cov)},
                     {"bracket", {r.bracket.first, r.bracket.second}},
                     {"evaluations", r.evaluations},
                     {"flat", r.flat},
                     {"multimodal", r.multimodal},
                     {"curvature_ok", r.curvature_ok}};
    if (cmd.optimize_mu) j["mu_range"] = {cmd.mu_min, cmd.mu_max};
    write_json(cmd.out_path, j, out);
  }
  return kExitOk;
}

struct Fig2Cmd {
  std::string out_dir = ".";
  int points = 120;
  int jobs = 1;
};

inline int run_fig2(const Fig2Cmd& cmd, std::ostream& out) {
  Fig2Options opts;
  opts.points = cmd.points;
  opts.jobs = cmd.jobs;
  for (const auto& curve : fig2_curves(opts)) {
    std::ostringstream os;
    curve.table.write(os);
    const auto path = std::filesystem::path(cmd.out_dir) / (curve.name + ".csv");
    write_file(path, os.str());
    out << path.string() << '\n';
  }
  return kExitOk;
}

struct Fig3Cmd {
  std::string out_dir = ".";
  std::string panel = "all";
  int resolution = 64;
  double chi = 50.0;
  int jobs = 1;
};

inline int run_fig3(const Fig3Cmd& cmd, std::ostream& out) {
  Fig3Options opts;
  opts.resolution = cmd.resolution;
  opts.chi = cmd.chi;
  opts.jobs = cmd.jobs;
  const std::string panels = cmd.panel == "all" ? "abcd" : cmd.panel;
  for (char panel : panels) {
    const auto r = fig3_panel(panel, opts);
    std::ostringstream os;
    write_sweep_csv(os, r, fig3_thresholds());
    const auto path = std::filesystem::path(cmd.out_dir) / (std::string("fig3") + panel + ".csv");
    write_file(path, os.str());
    out << path.string() << '\n';
  }
  return kExitOk;
}

struct SweepCmd {
  std::string spec_path;
  std::string out_path;
  int jobs = 1;
};

inline int run_sweep_cmd(const SweepCmd& cmd, std::ostream& out) {
  std::ifstream is(cmd.spec_path, std::ios::binary);
  if (!is) throw Error(ErrorCode::Io, "cannot read " + cmd.spec_path);
  std::stringstream buf;
  buf << is.rdbuf();
  const SweepSpec spec = parse_sweep_spec_text(buf.str());
  const auto r = run_sweep(spec, SweepOptions{cmd.jobs, {}});
  if (ends_with(cmd.out_path, ".json")) {
    write_file(cmd.out_path, sweep_to_json(r).dump(2) + '\n');
  } else {
    std::ostringstream os;
    write_sweep_csv(os, r);
    if (cmd.out_path.empty() || cmd.out_path == "-") {
      out << os.str();
    } else {
      write_file(cmd.out_path, os.str());
    }
  }
  return kExitOk;
}

struct SimulateCmd {
  ParamFlags flags;
  bool optimize_delta = false;
  double t_final = 10.0;
  std::optional<double> dt;
  std::uint64_t seed = 1;
  double feedback_gain = 0.0;
  long ensemble = 0;
  std::string out_path;
  int jobs = 1;
};

inline nlohmann::json trajectory_json(const TrajectoryRecord& rec, const SimulationConfig& cfg) {
  nlohmann::json means = nlohmann::json::array();
  nlohmann::json covs = nlohmann::json::array();
  for (const auto& m : rec.means) means.push_back({m.x_mean, m.y_mean});
  for (const auto& c : rec.covariances) covs.push_back({c.v_x, c.v_y, c.c});
  return {{"version", kVersion},     {"params", params_to_json(rec.params)},
          {"seed", rec.seed},        {"feedback_gain", rec.feedback_gain},
          {"t_final", cfg.t_final},  {"dt", cfg.dt},
          {"times", rec.times},      {"means", means},
          {"covariances", covs},     {"record_x", rec.record_x},
          {"record_y", rec.record_y}};
}

inline std::string trajectory_csv(const TrajectoryRecord& rec, const SimulationConfig& cfg) {
  CsvTable t;
  t.comments = {"mechsqueeze " + std::string(kVersion), params_comment(rec.params),
                "seed=" + std::to_string(rec.seed) + " feedback_gain=" + format_number(rec.feedback_gain) +
                    " t_final=" + format_number(cfg.t_final) + " dt=" + format_number(cfg.dt),
                "record_x/record_y on row k are the increments over [t_k, t_k+1]"};
  t.columns = {"t", "x_mean", "y_mean", "v_x", "v_y", "c", "record_x", "record_y"};
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t k = 0; k < rec.times.size(); ++k) {
    const bool has = k < rec.record_x.size();
    t.rows.push_back({rec.times[k], rec.means[k].x_mean, rec.means[k].y_mean, rec.covariances[k].v_x,
                      rec.covariances[k].v_y, rec.covariances[k].c, has ? rec.record_x[k] : nan,
                      has ? rec.record_y[k] : nan});
  }
  std::ostringstream os;
  t.write(os);
  return os.str();
}

inline int run_simulate(const SimulateCmd& cmd, std::ostream& out, std::ostream& err) {
  ValidatedParams vp = resolve_params(cmd.flags, err);
  if (cmd.optimize_delta) vp = vp.with_delta(optimal_detuning(vp).delta_opt).with_theta(std::numbers::pi / 4);
  if (!is_stable(vp)) {
    print_instability(vp, out);
    err << "error: unstable: chi^2 >= delta^2 + gamma^2\n";
    return kExitDomain;
  }
  SimulationConfig cfg;
  cfg.t_final = cmd.t_final;
  cfg.dt = cmd.dt ? *cmd.dt : std::min(1e-3, max_step(vp.get(), cmd.feedback_gain));
  cfg.seed = cmd.seed;
  cfg.feedback_gain = cmd.feedback_gain;
  const CovarianceState v_init = conditional_steady_state(vp).cov;

  if (cmd.ensemble > 0) {
    const auto s = simulate_ensemble(vp, v_init, cfg, cmd.ensemble, cmd.jobs);
    const auto est = s.unconditional_estimate();
    out << "trajectories = " << s.count << '\n'
        << "estimate   = " << fmt(est.v_x) << ", " << fmt(est.v_y) << ", " << fmt(est.c) << '\n'
        << "predicted  = " << fmt(s.predicted.v_x) << ", " << fmt(s.predicted.v_y) << ", "
        << fmt(s.predicted.c) << '\n'
        << "std error  = " << fmt(s.standard_error(0, 0)) << ", " << fmt(s.standard_error(1, 1))
        << ", " << fmt(s.standard_error(0, 1)) << '\n'
        << "z-scores   = " << fmt(s.z_scores(0, 0)) << ", " << fmt(s.z_scores(1, 1)) << ", "
        << fmt(s.z_scores(0, 1)) << '\n'
        << "unconditional " << kDbLabel << ": "
        << (est.v_x > 0.0 ? fmt(to_db(est.v_x)) : std::string("nan")) << '\n';
    if (!cmd.out_path.empty()) {
      auto mat = [](const Mat2& m) {
        return nlohmann::json{{"v_x", m(0, 0)}, {"v_y", m(1, 1)}, {"c", m(0, 1)}};
      };
      nlohmann::json j{{"version", kVersion},
                       {"params", params_to_json(vp.get())},
                       {"seed", cfg.seed},
                       {"feedback_gain", cfg.feedback_gain},
                       {"t_final", cfg.t_final},
                       {"dt", cfg.dt},
                       {"trajectories", s.count},
                       {"mean", {s.mean(0), s.mean(1)}},
                       {"second_moment", mat(s.second_moment)},
                       {"conditional", cov_json(s.conditional)},
                       {"estimate", cov_json(est)},
                       {"predicted", cov_json(s.predicted)},
                       {"standard_error", mat(s.standard_error)},
                       {"z_scores", mat(s.z_scores)}};
      write_json(cmd.out_path, j, out);
    }
    return kExitOk;
  }

  const auto rec = simulate_trajectory(vp, v_init, cfg);
  if (ends_with(cmd.out_path, ".csv")) {
    write_file(cmd.out_path, trajectory_csv(rec, cfg));
  } else if (cmd.out_path.empty()) {
    out << trajectory_json(rec, cfg).dump() << '\n';
  } else {
    write_json(cmd.out_path, trajectory_json(rec, cfg), out);
  }
  return kExitOk;
}

}  // namespace cli_detail

/// Parses argv and runs one subcommand. Returns the process exit code.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  using namespace cli_detail;
  CLI::App app{"Squeezing of a parametrically driven, continuously measured mechanical oscillator",
               "mechsqueeze"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  // CLI11 does not run validators on environment values, so the default is
  // checked here.
  int jobs = default_jobs();
  if (const char* env = std::getenv("MECHSQUEEZE_JOBS"); env != nullptr && *env != '\0') {
    const std::string_view text(env);
    const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), jobs);
    if (ec != std::errc() || end != text.data() + text.size() || jobs < 1) {
      err << "error: MECHSQUEEZE_JOBS must be a positive integer, got '" << text << "'\n";
      return kExitUsage;
    }
  }
  auto add_jobs = [&](CLI::App* sub) {
    sub->add_option("--jobs", jobs, "Worker threads (default: $MECHSQUEEZE_JOBS, else hardware threads)")
        ->check(CLI::PositiveNumber);
  };

  SteadyCmd steady;
  auto* s = app.add_subcommand("steady", "Conditional steady state at one parameter point");
  add_param_flags(s, steady.flags);
  s->add_flag("--optimize-delta", steady.optimize_delta, "Replace --delta by the optimal detuning");
  s->add_option("--out", steady.out_path, "Write a JSON report (- for stdout)");

  OptimizeCmd optimize;
  auto* o = app.add_subcommand("optimize", "Optimal detuning, optionally also over mu");
  add_param_flags(o, optimize.flags);
  o->add_flag("--optimize-mu", optimize.optimize_mu, "Also optimize the measurement rate");
  o->add_option("--mu-min", optimize.mu_min, "Lower end of the mu search")->capture_default_str();
  o->add_option("--mu-max", optimize.mu_max, "Upper end of the mu search")->capture_default_str();
  o->add_option("--out", optimize.out_path, "Write a JSON report (- for stdout)");

  Fig2Cmd fig2;
  auto* f2 = app.add_subcommand("fig2", "Optimal-detuning curves versus chi'");
  f2->add_option("--out", fig2.out_dir, "Output directory")->capture_default_str();
  f2->add_option("--points", fig2.points, "Points on the chi' grid")
      ->check(CLI::Range(2, 100000))
      ->capture_default_str();
  add_jobs(f2);

  Fig3Cmd fig3;
  auto* f3 = app.add_subcommand("fig3", "Squeezing maps at chi/gamma = 50");
  f3->add_option("--out", fig3.out_dir, "Output directory")->capture_default_str();
  f3->add_option("--panel", fig3.panel, "Panel to compute")
      ->check(CLI::IsMember({"a", "b", "c", "d", "all"}))
      ->capture_default_str();
  f3->add_option("--resolution", fig3.resolution, "Grid points per axis")
      ->check(CLI::Range(2, 100000))
      ->capture_default_str();
  f3->add_option("--chi", fig3.chi, "Parametric nonlinearity")->capture_default_str();
  add_jobs(f3);

  SweepCmd sweep;
  auto* sw = app.add_subcommand("sweep", "Evaluate an objective over a JSON SweepSpec grid");
  sw->add_option("spec", sweep.spec_path, "SweepSpec JSON file")->required();
  sw->add_option("--out", sweep.out_path, "Output file (.json for JSON, otherwise CSV; default stdout)");
  add_jobs(sw);

  SimulateCmd sim;
  auto* si = app.add_subcommand("simulate", "Conditional trajectory or ensemble summary");
  add_param_flags(si, sim.flags);
  si->add_flag("--optimize-delta", sim.optimize_delta, "Replace --delta by the optimal detuning");
  si->add_option("--t-final", sim.t_final, "Simulated time")->capture_default_str();
  si->add_option("--dt", sim.dt, "Time step (default min(1e-3, largest accepted step))");
  si->add_option("--seed", sim.seed, "Random seed")->capture_default_str();
  si->add_option("--feedback-gain", sim.feedback_gain, "Linear feedback gain g")->capture_default_str();
  si->add_option("--ensemble", sim.ensemble, "Number of trajectories; 0 dumps one trajectory")
      ->check(CLI::NonNegativeNumber);
  si->add_option("--out", sim.out_path, "Output file (.csv or JSON)");
  add_jobs(si);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*s) return run_steady(steady, out, err);
    if (*o) return run_optimize(optimize, out, err);
    if (*f2) {
      fig2.jobs = jobs;
      return run_fig2(fig2, out);
    }
    if (*f3) {
      fig3.jobs = jobs;
      return run_fig3(fig3, out);
    }
    if (*sw) {
      sweep.jobs = jobs;
      return run_sweep_cmd(sweep, out);
    }
    if (*si) {
      sim.jobs = jobs;
      return run_simulate(sim, out, err);
    }
  } catch (const ParameterError& e) {
    err << "error: " << e.what() << '\n';
    return kExitDomain;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace mechsqueeze
