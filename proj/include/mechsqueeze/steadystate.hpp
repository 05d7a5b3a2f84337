#pragma once

// Steady-state conditional and unconditional quadrature covariances.
//
// Internally everything is solved at drive phase theta = pi/4, where the
// drift matrix is
//
//     A = [[-gamma, chi - delta], [chi + delta, -gamma]]
//
// and the conditional covariance obeys the Riccati equation
//
//     dV/dt = A V + V A^T + D I - 4 eta mu V^2.
//
// Results for other theta are the same covariance expressed in the rotated
// quadrature frame, V_theta = R(pi/4 - theta) V R(pi/4 - theta)^T.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string_view>

#include "mechsqueeze/errors.hpp"
#include "mechsqueeze/linalg.hpp"
#include "mechsqueeze/model.hpp"

namespace mechsqueeze {

struct DriftDiffusion {
  Mat2 a;               ///< drift matrix
  double d = 0.0;       ///< scalar diffusion (multiplies the identity)
  double k_gain = 0.0;  ///< conditioning strength 4 eta mu
};

/// Drift and diffusion in the theta = pi/4 frame.
inline DriftDiffusion drift_matrix(const ValidatedParams& vp) {
  const auto& p = vp.get();
  DriftDiffusion dd;
  dd.a << -p.gamma, p.chi - p.delta, p.chi + p.delta, -p.gamma;
  dd.d = diffusion_constant(p);
  dd.k_gain = 4.0 * p.eta * p.mu;
  return dd;
}

/// Rotation taking theta = pi/4 quadratures to the frame of `p.theta`.
inline double frame_angle(const SystemParams& p) { return std::numbers::pi / 4 - p.theta; }

/// Drift matrix expressed in the quadrature frame of `vp->theta`.
inline Mat2 drift_matrix_in_frame(const ValidatedParams& vp) {
  const Mat2 r = rotation(frame_angle(vp.get()));
  return r * drift_matrix(vp).a * r.transpose();
}

/// Right-hand side of the Riccati equation for an arbitrary drift matrix.
inline Mat2 riccati_rhs(const Mat2& a, double d, double k, const Mat2& v) {
  return a * v + v * a.transpose() + d * Mat2::Identity() - k * v * v;
}

inline Mat2 riccati_rhs(const DriftDiffusion& dd, const Mat2& v) {
  return riccati_rhs(dd.a, dd.d, dd.k_gain, v);
}

/// Relative norm of the Riccati residual at `cov` (theta = pi/4 frame).
inline double riccati_residual(const ValidatedParams& vp, const CovarianceState& cov) {
  const auto dd = drift_matrix(vp);
  const Mat2 v = cov.matrix();
  const Mat2 av = dd.a * v;
  const double scale =
      2.0 * max_abs(av) + dd.d + dd.k_gain * max_abs(v * v) + std::numeric_limits<double>::min();
  return max_abs(riccati_rhs(dd, v)) / scale;
}

/// One application of the three coupled steady-state equations. Returns
/// nullopt when a radicand or a variance would be negative.
///
/// The variance updates use the rationalized form
///     (sqrt(gamma^2 + k x) - gamma) / k  ==  x / (sqrt(gamma^2 + k x) + gamma),
/// which stays exact as k = 4 eta mu -> 0.
inline std::optional<CovarianceState> fixed_point_map(const ValidatedParams& vp,
                                                      const CovarianceState& cov) {
  const auto& p = vp.get();
  const double k = 4.0 * p.eta * p.mu;
  const double d = diffusion_constant(p);
  const double g2 = p.gamma * p.gamma;
  const double c = cov.c;

  const double xx = d - 2.0 * c * (p.delta - p.chi) - k * c * c;
  const double xy = d + 2.0 * c * (p.delta + p.chi) - k * c * c;
  const double rx = g2 + k * xx;
  const double ry = g2 + k * xy;
  if (!(rx >= 0.0) || !(ry >= 0.0) || !(xx > 0.0) || !(xy > 0.0)) return std::nullopt;

  CovarianceState out;
  out.v_x = xx / (std::sqrt(rx) + p.gamma);
  out.v_y = xy / (std::sqrt(ry) + p.gamma);
  const double sum = out.v_x + out.v_y;
  out.c = (p.chi * sum - p.delta * (out.v_y - out.v_x)) / (k * sum + 2.0 * p.gamma);
  return out;
}

/// max |F(V) - V| / max |V| for the coupled-equation map F.
inline double fixed_point_residual(const ValidatedParams& vp, const CovarianceState& cov) {
  const auto next = fixed_point_map(vp, cov);
  if (!next) return std::numeric_limits<double>::infinity();
  const double diff = std::max({std::abs(next->v_x - cov.v_x), std::abs(next->v_y - cov.v_y),
                                std::abs(next->c - cov.c)});
  return diff / cov.max_abs();
}

/// Pump-off conditional variance, the back-action-limited baseline.
/// Equals N + 1/2 when mu = 0.
inline double v0(const ValidatedParams& vp) {
  const auto& p = vp.get();
  const double d = diffusion_constant(p);
  const double z = 4.0 * p.eta * p.mu * d;
  return d / (std::sqrt(p.gamma * p.gamma + z) + p.gamma);
}

/// Conditional variance of a back-action-evading measurement: the pump-off
/// formula with the back-action phonons removed.
inline double bae_variance(const ValidatedParams& vp) {
  const auto& p = vp.get();
  const double d = 2.0 * p.gamma * (p.n_thermal + 0.5);
  const double z = 4.0 * p.eta * p.mu * d;
  return d / (std::sqrt(p.gamma * p.gamma + z) + p.gamma);
}

enum class SteadyStateMethod { FixedPoint, NewtonKleinman, RiccatiFlow, Lyapunov };

constexpr std::string_view to_string(SteadyStateMethod m) {
  switch (m) {
    case SteadyStateMethod::FixedPoint: return "fixed_point";
    case SteadyStateMethod::NewtonKleinman: return "newton_kleinman";
    case SteadyStateMethod::RiccatiFlow: return "riccati_flow";
    case SteadyStateMethod::Lyapunov: return "lyapunov";
  }
  return "unknown";
}

struct SteadyStateOptions {
  double rel_tol = 1e-12;
  long max_iterations = 1'000'000;
  double relaxation = 0.5;
  /// eta*mu below this multiple of gamma switches to the linear Lyapunov solve.
  double degenerate_threshold = 1e-12;
};

struct SteadyStateResult {
  CovarianceState cov;  ///< in the frame of params.theta
  SteadyStateMethod method = SteadyStateMethod::FixedPoint;
  long iterations = 0;
  double residual = 0.0;    ///< Riccati residual (relative), theta = pi/4 frame
  double relaxation = 1.0;  ///< final relaxation factor (fixed point only)
};

namespace detail {

inline void require_stable(const ValidatedParams& vp) {
  if (!is_stable(vp)) {
    throw Error(ErrorCode::UnstableParameters, "unstable: chi^2 >= delta^2 + gamma^2");
  }
}

inline CovarianceState pump_off_state(const ValidatedParams& vp) {
  const double v = v0(vp);
  return {v, v, 0.0};
}

inline SteadyStateResult finish(const ValidatedParams& vp, CovarianceState quarter,
                                SteadyStateMethod method, long iterations, double relaxation) {
  SteadyStateResult r;
  r.residual = riccati_residual(vp, quarter);
  r.cov = rotate(quarter, frame_angle(vp.get()));
  r.method = method;
  r.iterations = iterations;
  r.relaxation = relaxation;
  return r;
}

}  // namespace detail

/// Lyapunov covariance of the unmeasured dynamics: A V + V A^T + D I = 0,
/// expressed in the theta = pi/4 frame.
inline CovarianceState unconditional_lyapunov_quarter(const ValidatedParams& vp) {
  detail::require_stable(vp);
  const auto dd = drift_matrix(vp);
  const auto v = solve_lyapunov(dd.a, dd.d * Mat2::Identity());
  if (!v) throw Error(ErrorCode::UnstableParameters, "singular Lyapunov operator");
  return CovarianceState::from_matrix(*v);
}

/// Damped fixed-point iteration of the coupled equations. The relaxation
/// factor is halved and the iteration restarted whenever an update leaves the
/// domain (negative radicand or variance) or the residual blows up.
inline SteadyStateResult solve_fixed_point(const ValidatedParams& vp,
                                           const SteadyStateOptions& opts = {}) {
  detail::require_stable(vp);
  const CovarianceState start = detail::pump_off_state(vp);
  double omega = opts.relaxation;
  CovarianceState cur = start;
  double best = std::numeric_limits<double>::infinity();
  long iter = 0;
  double residual = std::numeric_limits<double>::infinity();

  while (iter < opts.max_iterations) {
    ++iter;
    const auto next = fixed_point_map(vp, cur);
    bool restart = !next;
    if (next) {
      residual = std::max({std::abs(next->v_x - cur.v_x), std::abs(next->v_y - cur.v_y),
                           std::abs(next->c - cur.c)}) /
                 cur.max_abs();
      if (!std::isfinite(residual) || residual > 1e3 * best + 1e-3) restart = true;
    }
    if (restart) {
      omega *= 0.5;
      if (omega < 1e-12) break;
      cur = start;
      best = std::numeric_limits<double>::infinity();
      continue;
    }
    best = std::min(best, residual);
    if (residual <= opts.rel_tol) {
      return detail::finish(vp, *next, SteadyStateMethod::FixedPoint, iter, omega);
    }
    cur.v_x += omega * (next->v_x - cur.v_x);
    cur.v_y += omega * (next->v_y - cur.v_y);
    cur.c += omega * (next->c - cur.c);
  }
  throw ConvergenceError("fixed-point iteration did not converge", residual, iter);
}

/// Newton-Kleinman iteration: each step solves the Lyapunov equation of the
/// closed-loop matrix A - k V_i. Converges quadratically from the pump-off
/// state, which is always stabilizing for stable A.
inline SteadyStateResult solve_newton_kleinman(const ValidatedParams& vp,
                                               const SteadyStateOptions& opts = {}) {
  detail::require_stable(vp);
  const auto dd = drift_matrix(vp);
  Mat2 v = detail::pump_off_state(vp).matrix();
  double change = std::numeric_limits<double>::infinity();
  for (long iter = 1; iter <= 200; ++iter) {
    const Mat2 closed = dd.a - dd.k_gain * v;
    const auto next = solve_lyapunov(closed, dd.d * Mat2::Identity() + dd.k_gain * v * v);
    if (!next) break;
    change = max_abs(*next - v) / max_abs(*next);
    v = *next;
    if (change <= 1e-15 || (iter > 3 && change <= opts.rel_tol * 1e-2)) {
      return detail::finish(vp, CovarianceState::from_matrix(v), SteadyStateMethod::NewtonKleinman,
                            iter, 1.0);
    }
  }
  const auto quarter = CovarianceState::from_matrix(v);
  const double res = riccati_residual(vp, quarter);
  if (res <= 1e2 * opts.rel_tol) {
    return detail::finish(vp, quarter, SteadyStateMethod::NewtonKleinman, 200, 1.0);
  }
  throw ConvergenceError("Newton-Kleinman iteration did not converge", res, 200);
}

/// Integrates the Riccati ODE with RK4 from the pump-off state until
/// ||dV/dt|| falls below rel_tol relative to the size of its terms.
inline SteadyStateResult solve_riccati_flow(const ValidatedParams& vp,
                                            const SteadyStateOptions& opts = {}) {
  detail::require_stable(vp);
  const auto& p = vp.get();
  const auto dd = drift_matrix(vp);
  Mat2 v = detail::pump_off_state(vp).matrix();
  const long max_steps = std::max<long>(opts.max_iterations, 10'000'000);
  for (long step = 1; step <= max_steps; ++step) {
    const double rate =
        p.gamma + p.chi + std::abs(p.delta) + dd.k_gain * max_abs(v) + dd.d / max_abs(v);
    const double h = 0.05 / rate;
    const Mat2 k1 = riccati_rhs(dd, v);
    const double scale = 2.0 * max_abs(dd.a * v) + dd.d + dd.k_gain * max_abs(v * v);
    if (max_abs(k1) <= opts.rel_tol * scale) {
      return detail::finish(vp, CovarianceState::from_matrix(v), SteadyStateMethod::RiccatiFlow,
                            step, 1.0);
    }
    const Mat2 k2 = riccati_rhs(dd, v + 0.5 * h * k1);
    const Mat2 k3 = riccati_rhs(dd, v + 0.5 * h * k2);
    const Mat2 k4 = riccati_rhs(dd, v + h * k3);
    v += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!v.allFinite()) break;
  }
  throw ConvergenceError("Riccati flow did not reach steady state",
                         riccati_residual(vp, CovarianceState::from_matrix(v)), max_steps);
}

/// Steady-state conditional covariance. Uses the linear Lyapunov solve when
/// eta*mu is negligible. Otherwise runs `method` (Newton-Kleinman by default)
/// and falls back to the fixed-point iteration and then the Riccati flow.
inline SteadyStateResult conditional_steady_state(
    const ValidatedParams& vp, const SteadyStateOptions& opts = {},
    SteadyStateMethod method = SteadyStateMethod::NewtonKleinman) {
  detail::require_stable(vp);
  const auto& p = vp.get();
  if (p.eta * p.mu < opts.degenerate_threshold * p.gamma ||
      method == SteadyStateMethod::Lyapunov) {
    return detail::finish(vp, unconditional_lyapunov_quarter(vp), SteadyStateMethod::Lyapunov, 1,
                          1.0);
  }
  if (method == SteadyStateMethod::RiccatiFlow) return solve_riccati_flow(vp, opts);
  if (method == SteadyStateMethod::NewtonKleinman) {
    try {
      return solve_newton_kleinman(vp, opts);
    } catch (const ConvergenceError&) {
    }
  }
  try {
    return solve_fixed_point(vp, opts);
  } catch (const ConvergenceError&) {
    return solve_riccati_flow(vp, opts);
  }
}

/// Unmeasured steady state, A V + V A^T + D I = 0, in the frame of theta.
inline CovarianceState unconditional_lyapunov(const ValidatedParams& vp) {
  return rotate(unconditional_lyapunov_quarter(vp), frame_angle(vp.get()));
}

/// Covariance of the conditional means under linear feedback -g <x>.
/// Solves (A - gI) E + E (A - gI)^T + 4 eta mu V^2 = 0 for a conditional
/// state V given in the theta = pi/4 frame.
inline CovarianceState mean_excess_covariance_quarter(const ValidatedParams& vp,
                                                      const CovarianceState& conditional_quarter,
                                                      double feedback_gain) {
  const auto dd = drift_matrix(vp);
  const Mat2 v = conditional_quarter.matrix();
  const Mat2 closed = dd.a - feedback_gain * Mat2::Identity();
  const auto e = solve_lyapunov(closed, dd.k_gain * v * v);
  if (!e) throw Error(ErrorCode::UnstableParameters, "singular feedback Lyapunov operator");
  return CovarianceState::from_matrix(*e);
}

/// Unconditional covariance under feedback: conditional state plus the
/// stationary covariance of the conditional means.
inline CovarianceState unconditional_steady_state(const ValidatedParams& vp, double feedback_gain,
                                                  const SteadyStateOptions& opts = {}) {
  if (!(feedback_gain >= 0.0)) {
    throw Error(ErrorCode::NegativeRate, "feedback gain must be >= 0");
  }
  const auto cond = conditional_steady_state(vp, opts);
  const double angle = frame_angle(vp.get());
  const CovarianceState quarter = rotate(cond.cov, -angle);
  const CovarianceState excess = mean_excess_covariance_quarter(vp, quarter, feedback_gain);
  return rotate(CovarianceState{quarter.v_x + excess.v_x, quarter.v_y + excess.v_y,
                                quarter.c + excess.c},
                angle);
}

struct PrincipalVariances {
  double v_min = 0.0;
  double v_max = 0.0;
  double angle = 0.0;  ///< minor-axis direction in (-pi/2, pi/2]
};

inline PrincipalVariances principal_variances(const CovarianceState& cov) {
  const double mean = 0.5 * (cov.v_x + cov.v_y);
  const double half_diff = 0.5 * (cov.v_x - cov.v_y);
  const double radius = std::hypot(half_diff, cov.c);
  PrincipalVariances out;
  out.v_max = mean + radius;
  // Stable form of the smaller eigenvalue: det / larger eigenvalue.
  out.v_min = out.v_max > 0.0 ? cov.det() / out.v_max : mean - radius;
  double minor = 0.5 * std::atan2(2.0 * cov.c, cov.v_x - cov.v_y) + std::numbers::pi / 2;
  while (minor > std::numbers::pi / 2) minor -= std::numbers::pi;
  while (minor <= -std::numbers::pi / 2) minor += std::numbers::pi;
  out.angle = minor;
  return out;
}

/// Slowest relaxation rate of covariance perturbations around V (theta =
/// pi/4 frame): -2 max Re eig(A - kV).
inline double slowest_relaxation_rate(const ValidatedParams& vp, const CovarianceState& quarter) {
  const auto dd = drift_matrix(vp);
  const Mat2 closed = dd.a - dd.k_gain * quarter.matrix();
  const Eigen::EigenSolver<Mat2> es(closed);
  const double max_re = es.eigenvalues().real().maxCoeff();
  return -2.0 * max_re;
}

}  // namespace mechsqueeze
