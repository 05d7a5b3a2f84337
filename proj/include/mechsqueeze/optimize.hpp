#pragma once

// Optimization of the conditional squeezed variance v_x (theta = pi/4) over
// pump detuning, and jointly over detuning and measurement strength.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/tools/minima.hpp>

#include "mechsqueeze/errors.hpp"
#include "mechsqueeze/model.hpp"
#include "mechsqueeze/steadystate.hpp"

namespace mechsqueeze {

struct OptimizationResult {
  double delta_opt = 0.0;
  std::optional<double> mu_opt;
  double v_x_opt = 0.0;
  double v_db = 0.0;
  long evaluations = 0;
  std::pair<double, double> bracket{0.0, 0.0};
  CovarianceState cov;      ///< conditional state at the optimum, theta = pi/4
  bool flat = false;        ///< objective independent of delta (chi = 0)
  bool multimodal = false;  ///< pre-scan saw more than one local minimum
  bool curvature_ok = true; ///< central-difference curvature >= 0 at the optimum
};

struct OptimizeOptions {
  int bits = 32;  ///< Brent precision; 2^(1-bits) relative tolerance in delta
  int prescan_points = 64;
  int points_per_decade = 50;
  std::uintmax_t max_brent_iterations = 500;
  SteadyStateOptions steady;
};

namespace detail {

inline double quarter_vx(const ValidatedParams& vp, const SteadyStateOptions& opts) {
  return conditional_steady_state(vp, opts).cov.v_x;
}

inline long count_local_minima(const std::vector<double>& values) {
  long n = 0;
  for (std::size_t i = 1; i + 1 < values.size(); ++i) {
    if (values[i] < values[i - 1] && values[i] < values[i + 1]) ++n;
  }
  return n;
}

}  // namespace detail

/// Lower edge of the stable detuning range plus a small margin. The margin is
/// grown until is_stable holds in floating point.
inline double stable_detuning_floor(const ValidatedParams& vp) {
  const auto& p = vp.get();
  const double base = std::sqrt(std::max(0.0, p.chi * p.chi - p.gamma * p.gamma));
  double margin = 1e-9 * p.gamma;
  double lo = base + margin;
  for (int i = 0; i < 200 && !is_stable(vp.with_delta(lo)); ++i) {
    margin *= 2.0;
    lo = base + margin;
  }
  if (!is_stable(vp.with_delta(lo))) {
    throw Error(ErrorCode::NoStableDetuning, "no stable detuning found");
  }
  return lo;
}

/// Minimizes v_x over the detuning, ignoring params.delta. The search runs a
/// 64-point pre-scan on [floor, chi + 50 sqrt(gamma^2 + z)] and refines around
/// the best scan point with Brent's golden-section/parabolic method.
inline OptimizationResult optimal_detuning(const ValidatedParams& params,
                                           const OptimizeOptions& opts = {}) {
  const ValidatedParams vp = params.with_theta(std::numbers::pi / 4);
  const auto& p = vp.get();
  const auto dq = derived(vp);
  long evals = 0;
  auto objective = [&](double delta) {
    ++evals;
    return detail::quarter_vx(vp.with_delta(delta), opts.steady);
  };

  const double lo = stable_detuning_floor(vp);
  double hi = p.chi + 50.0 * std::sqrt(p.gamma * p.gamma + dq.z);

  OptimizationResult out;
  if (p.chi == 0.0) {
    const double mid = 0.5 * (lo + hi);
    out.delta_opt = mid;
    out.v_x_opt = objective(mid);
    out.cov = conditional_steady_state(vp.with_delta(mid), opts.steady).cov;
    out.flat = true;
    out.bracket = {lo, hi};
    out.v_db = to_db(out.v_x_opt);
    out.evaluations = evals;
    return out;
  }

  // Grow the upper edge until it sits above the middle of the range.
  for (int i = 0; i < 60; ++i) {
    if (objective(hi) > objective(0.5 * (lo + hi))) break;
    hi = lo + 2.0 * (hi - lo);
  }

  const int n = std::max(opts.prescan_points, 3);
  std::vector<double> xs(n);
  std::vector<double> fs(n);
  for (int i = 0; i < n; ++i) {
    xs[i] = lo + (hi - lo) * (i + 1) / static_cast<double>(n + 1);
    fs[i] = objective(xs[i]);
  }
  const auto best = static_cast<std::size_t>(std::min_element(fs.begin(), fs.end()) - fs.begin());
  const double a = best == 0 ? lo : xs[best - 1];
  const double b = best + 1 == xs.size() ? hi : xs[best + 1];

  std::uintmax_t iters = opts.max_brent_iterations;
  const auto [x, fx] = boost::math::tools::brent_find_minima(objective, a, b, opts.bits, iters);
  if (iters >= opts.max_brent_iterations) {
    throw ConvergenceError("Brent refinement did not converge", fx, static_cast<long>(iters));
  }

  out.delta_opt = x;
  out.v_x_opt = fx;
  if (fs[best] < fx) {
    out.delta_opt = xs[best];
    out.v_x_opt = fs[best];
  }
  out.bracket = {a, b};
  out.multimodal = detail::count_local_minima(fs) > 1;

  const double h = 1e-4 * std::max(b - a, 1e-6 * p.gamma);
  if (out.delta_opt - h > lo) {
    const double fp = objective(out.delta_opt + h);
    const double fm = objective(out.delta_opt - h);
    out.curvature_ok = fp + fm - 2.0 * out.v_x_opt >= -1e-12 * out.v_x_opt;
  }
  out.cov = conditional_steady_state(vp.with_delta(out.delta_opt), opts.steady).cov;
  out.v_db = to_db(out.v_x_opt);
  out.evaluations = evals;
  return out;
}

/// Maximizes squeezing of the optimally detuned state over mu on a log grid
/// (>= points_per_decade per decade) followed by Brent refinement in log mu.
inline OptimizationResult optimal_measurement(const ValidatedParams& params, double mu_lo,
                                              double mu_hi, const OptimizeOptions& opts = {}) {
  if (!(mu_lo > 0.0) || !(mu_hi > mu_lo)) {
    throw Error(ErrorCode::NegativeRate, "optimal_measurement: need 0 < mu_lo < mu_hi");
  }
  long evals = 0;
  auto inner = [&](double mu) {
    auto r = optimal_detuning(params.with_mu(mu), opts);
    evals += r.evaluations;
    return r;
  };

  const double decades = std::log10(mu_hi / mu_lo);
  const int n = std::max(3, static_cast<int>(std::ceil(decades * opts.points_per_decade)) + 1);
  std::vector<double> log_mu(n);
  std::vector<double> fs(n);
  for (int i = 0; i < n; ++i) {
    log_mu[i] = std::log(mu_lo) + (std::log(mu_hi) - std::log(mu_lo)) * i / (n - 1.0);
    if (i == n - 1) log_mu[i] = std::log(mu_hi);
    fs[i] = inner(std::exp(log_mu[i])).v_x_opt;
  }
  const auto best = static_cast<std::size_t>(std::min_element(fs.begin(), fs.end()) - fs.begin());
  const double a = log_mu[best == 0 ? 0 : best - 1];
  const double b = log_mu[best + 1 == log_mu.size() ? best : best + 1];

  double best_log = log_mu[best];
  double best_f = fs[best];
  if (b > a) {
    std::uintmax_t iters = opts.max_brent_iterations;
    const auto [x, fx] = boost::math::tools::brent_find_minima(
        [&](double lm) { return inner(std::exp(lm)).v_x_opt; }, a, b, opts.bits, iters);
    if (fx < best_f) {
      best_log = x;
      best_f = fx;
    }
  }
  const double mu_opt = best == log_mu.size() - 1 && best_log == log_mu[best]
                            ? mu_hi
                            : (best == 0 && best_log == log_mu[0] ? mu_lo : std::exp(best_log));
  OptimizationResult out = inner(mu_opt);
  out.mu_opt = mu_opt;
  out.evaluations = evals;
  return out;
}

}  // namespace mechsqueeze
