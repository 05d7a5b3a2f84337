#pragma once

// Time-domain evolution of the conditional Gaussian state.
//
// The covariance follows the deterministic Riccati equation (RK4). The
// conditional means follow
//
//     d<x> = (A - g I) <x> dt + 2 sqrt(eta mu) V dW,
//
// integrated with Euler-Maruyama on the same grid. The measurement record is
//
//     dr = <x> dt + dW / (2 sqrt(eta mu)),
//
// so that feeding dr back through the filter recovers dW exactly.
//
// Grid convention: a run of n steps has n + 1 entries in `times`, `means` and
// `covariances`; record_x[k], record_y[k] are the increments over
// [times[k], times[k+1]] and hold n entries (none when eta * mu = 0).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <thread>
#include <utility>
#include <vector>

#include "mechsqueeze/errors.hpp"
#include "mechsqueeze/linalg.hpp"
#include "mechsqueeze/model.hpp"
#include "mechsqueeze/steadystate.hpp"

namespace mechsqueeze {

struct MeanState {
  double x_mean = 0.0;
  double y_mean = 0.0;

  Vec2 vec() const { return {x_mean, y_mean}; }
  static MeanState from_vec(const Vec2& v) { return {v(0), v(1)}; }
  friend bool operator==(const MeanState&, const MeanState&) = default;
};

struct TrajectoryRecord {
  std::vector<double> times;
  std::vector<MeanState> means;
  std::vector<CovarianceState> covariances;
  std::vector<double> record_x;
  std::vector<double> record_y;
  std::uint64_t seed = 0;
  double feedback_gain = 0.0;
  SystemParams params;
};

struct SimulationConfig {
  double t_final = 10.0;
  double dt = 1e-3;
  std::uint64_t seed = 1;
  double feedback_gain = 0.0;
  MeanState mean_init{};
};

/// Largest step accepted for the given parameters: 0.01 / max(gamma, chi,
/// |delta|, mu, g).
inline double max_step(const SystemParams& p, double feedback_gain = 0.0) {
  const double rate = std::max({p.gamma, p.chi, std::abs(p.delta), p.mu, feedback_gain});
  return 0.01 / rate;
}

inline void check_step(const SystemParams& p, double dt, double feedback_gain = 0.0) {
  if (!(dt > 0.0) || dt > max_step(p, feedback_gain) * (1.0 + 1e-12)) {
    throw Error(ErrorCode::StepTooLarge, "dt = " + std::to_string(dt) + " exceeds the step guard " +
                                             std::to_string(max_step(p, feedback_gain)));
  }
}

struct TimeGrid {
  long steps = 0;
  double h = 0.0;
};

/// n = ceil(t_final / dt) equal steps of h = t_final / n <= dt.
inline TimeGrid make_grid(double t_final, double dt) {
  if (!(t_final > 0.0) || !(dt > 0.0)) {
    throw Error(ErrorCode::StepTooLarge, "t_final and dt must be > 0");
  }
  const long n = std::max<long>(1, static_cast<long>(std::ceil(t_final / dt - 1e-9)));
  return {n, t_final / static_cast<double>(n)};
}

namespace detail {

inline std::vector<CovarianceState> riccati_on_grid(const ValidatedParams& vp,
                                                    const CovarianceState& v_init,
                                                    const TimeGrid& grid) {
  const Mat2 a = drift_matrix_in_frame(vp);
  const double d = diffusion_constant(vp.get());
  const double k = 4.0 * vp->eta * vp->mu;
  const double h = grid.h;
  std::vector<CovarianceState> out;
  out.reserve(static_cast<std::size_t>(grid.steps) + 1);
  out.push_back(v_init);
  Mat2 v = v_init.matrix();
  for (long i = 0; i < grid.steps; ++i) {
    const Mat2 k1 = riccati_rhs(a, d, k, v);
    const Mat2 k2 = riccati_rhs(a, d, k, v + 0.5 * h * k1);
    const Mat2 k3 = riccati_rhs(a, d, k, v + 0.5 * h * k2);
    const Mat2 k4 = riccati_rhs(a, d, k, v + h * k3);
    v += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    const auto cov = CovarianceState::from_matrix(v);
    if (!v.allFinite() || !cov.positive_definite()) {
      throw Error(ErrorCode::PositivityLost,
                  "covariance lost positive definiteness at step " + std::to_string(i + 1));
    }
    out.push_back(cov);
  }
  return out;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Integrates dV/dt = A V + V A^T + D I - 4 eta mu V^2 with classical RK4.
/// Returns n + 1 states including v_init, in the frame of params.theta.
inline std::vector<CovarianceState> integrate_riccati(const ValidatedParams& vp,
                                                      const CovarianceState& v_init,
                                                      double t_final, double dt) {
  if (!is_stable(vp)) {
    throw Error(ErrorCode::UnstableParameters, "unstable: chi^2 >= delta^2 + gamma^2");
  }
  check_step(vp.get(), dt);
  return detail::riccati_on_grid(vp, v_init, make_grid(t_final, dt));
}

/// Seed of the `stream`-th independent trajectory derived from a user seed.
inline std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
  return detail::splitmix64(seed ^ detail::splitmix64(stream + 0x632BE59BD9B4E019ULL));
}

/// Pairs of independent standard normals from mt19937_64 via Box-Muller.
class NormalPairStream {
 public:
  explicit NormalPairStream(std::uint64_t seed) : engine_(seed) {}

  std::pair<double, double> next() {
    constexpr double kScale = 0x1.0p-53;
    const double u1 = static_cast<double>((engine_() >> 11) + 1) * kScale;  // (0, 1]
    const double u2 = static_cast<double>(engine_() >> 11) * kScale;        // [0, 1)
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double phi = 2.0 * std::numbers::pi * u2;
    return {r * std::cos(phi), r * std::sin(phi)};
  }

 private:
  std::mt19937_64 engine_;
};

/// Wiener increments (dW_X, dW_Y) ~ N(0, h) for one trajectory.
inline std::vector<Vec2> draw_increments(std::uint64_t seed, std::uint64_t stream, long steps,
                                         double h) {
  NormalPairStream rng(stream_seed(seed, stream));
  const double s = std::sqrt(h);
  std::vector<Vec2> out(static_cast<std::size_t>(steps));
  for (auto& dw : out) {
    const auto [a, b] = rng.next();
    dw = Vec2(s * a, s * b);
  }
  return out;
}

/// Precomputed filter for the conditional means on a fixed grid: the
/// deterministic covariance sequence and the per-step innovation gains.
class MeanPropagator {
 public:
  MeanPropagator(const ValidatedParams& vp, const CovarianceState& v_init, double t_final,
                 double dt, double feedback_gain)
      : params_(vp.get()), gain_(feedback_gain) {
    if (!is_stable(vp)) {
      throw Error(ErrorCode::UnstableParameters, "unstable: chi^2 >= delta^2 + gamma^2");
    }
    if (!(feedback_gain >= 0.0)) throw Error(ErrorCode::NegativeRate, "feedback gain must be >= 0");
    check_step(params_, dt, feedback_gain);
    grid_ = make_grid(t_final, dt);
    covariances_ = detail::riccati_on_grid(vp, v_init, grid_);
    drift_ = drift_matrix_in_frame(vp) - feedback_gain * Mat2::Identity();
    const double eta_mu = params_.eta * params_.mu;
    measured_ = eta_mu > 0.0;
    noise_scale_ = 2.0 * std::sqrt(eta_mu);
    gains_.reserve(covariances_.size());
    for (const auto& c : covariances_) gains_.push_back(noise_scale_ * c.matrix());
  }

  const TimeGrid& grid() const noexcept { return grid_; }
  const std::vector<CovarianceState>& covariances() const noexcept { return covariances_; }
  bool measured() const noexcept { return measured_; }
  double noise_scale() const noexcept { return noise_scale_; }

  /// One Euler-Maruyama step from grid index k with innovation dw.
  Vec2 step(long k, const Vec2& x, const Vec2& dw) const {
    const auto i = static_cast<std::size_t>(k);
    if (!measured_) return x + grid_.h * (drift_ * x);
    return x + grid_.h * (drift_ * x) + gains_[i] * dw;
  }

  Vec2 terminal(const Vec2& x0, std::span<const Vec2> increments) const {
    require_length(increments.size());
    Vec2 x = x0;
    for (long k = 0; k < grid_.steps; ++k) x = step(k, x, increments[static_cast<std::size_t>(k)]);
    if (!x.allFinite()) throw Error(ErrorCode::NonFiniteState, "non-finite conditional mean");
    return x;
  }

  /// Full trajectory and measurement record driven by the given innovations.
  TrajectoryRecord run(const MeanState& x0, std::span<const Vec2> increments,
                       std::uint64_t seed) const {
    require_length(increments.size());
    TrajectoryRecord rec;
    rec.seed = seed;
    rec.feedback_gain = gain_;
    rec.params = params_;
    rec.covariances = covariances_;
    const auto n = static_cast<std::size_t>(grid_.steps);
    rec.times.resize(n + 1);
    rec.means.resize(n + 1);
    if (measured_) {
      rec.record_x.resize(n);
      rec.record_y.resize(n);
    }
    Vec2 x = x0.vec();
    rec.times[0] = 0.0;
    rec.means[0] = x0;
    for (std::size_t k = 0; k < n; ++k) {
      const Vec2 dw = measured_ ? increments[k] : Vec2::Zero();
      if (measured_) {
        rec.record_x[k] = x(0) * grid_.h + dw(0) / noise_scale_;
        rec.record_y[k] = x(1) * grid_.h + dw(1) / noise_scale_;
      }
      x = step(static_cast<long>(k), x, dw);
      if (!x.allFinite()) throw Error(ErrorCode::NonFiniteState, "non-finite conditional mean");
      rec.times[k + 1] = grid_.h * static_cast<double>(k + 1);
      rec.means[k + 1] = MeanState::from_vec(x);
    }
    return rec;
  }

  /// Runs the filter on a stored measurement record.
  std::vector<MeanState> filter(const MeanState& x0, std::span<const double> record_x,
                                std::span<const double> record_y) const {
    const auto n = static_cast<std::size_t>(grid_.steps);
    std::vector<MeanState> out(n + 1);
    out[0] = x0;
    Vec2 x = x0.vec();
    for (std::size_t k = 0; k < n; ++k) {
      Vec2 dw = Vec2::Zero();
      if (measured_) {
        dw(0) = noise_scale_ * (record_x[k] - x(0) * grid_.h);
        dw(1) = noise_scale_ * (record_y[k] - x(1) * grid_.h);
      }
      x = step(static_cast<long>(k), x, dw);
      out[k + 1] = MeanState::from_vec(x);
    }
    return out;
  }

 private:
  void require_length(std::size_t got) const {
    if (measured_ && got < static_cast<std::size_t>(grid_.steps)) {
      throw Error(ErrorCode::ParamsMismatch, "too few innovation increments for the grid");
    }
  }

  SystemParams params_;
  double gain_ = 0.0;
  TimeGrid grid_;
  std::vector<CovarianceState> covariances_;
  std::vector<Mat2> gains_;
  Mat2 drift_;
  bool measured_ = false;
  double noise_scale_ = 0.0;
};

/// One conditional trajectory with its measurement record. Trajectory i of
/// simulate_ensemble with the same seed is simulate_trajectory(..., stream = i).
inline TrajectoryRecord simulate_trajectory(const ValidatedParams& vp,
                                            const CovarianceState& v_init,
                                            const SimulationConfig& cfg,
                                            std::uint64_t stream = 0) {
  const MeanPropagator prop(vp, v_init, cfg.t_final, cfg.dt, cfg.feedback_gain);
  std::vector<Vec2> dw;
  if (prop.measured()) dw = draw_increments(cfg.seed, stream, prop.grid().steps, prop.grid().h);
  return prop.run(cfg.mean_init, dw, cfg.seed);
}

/// Re-runs the filter equations on a stored record. `vp` may differ from the
/// parameters that generated the record; the grid and the presence of the
/// measurement record must be consistent.
inline std::vector<MeanState> refilter(const TrajectoryRecord& record, const ValidatedParams& vp,
                                       const CovarianceState& v_init) {
  const std::size_t n = record.means.size();
  if (n < 2 || record.times.size() != n) {
    throw Error(ErrorCode::ParamsMismatch, "record must hold matching times and means");
  }
  const bool measured = vp->eta * vp->mu > 0.0;
  if (measured && (record.record_x.size() != n - 1 || record.record_y.size() != n - 1)) {
    throw Error(ErrorCode::ParamsMismatch,
                "parameters have eta*mu > 0 but the record has no matching increments");
  }
  const double t_final = record.times.back();
  const double dt = t_final / static_cast<double>(n - 1);
  const MeanPropagator prop(vp, v_init, t_final, dt, record.feedback_gain);
  if (static_cast<std::size_t>(prop.grid().steps) != n - 1) {
    throw Error(ErrorCode::ParamsMismatch, "record time grid is not uniform");
  }
  return prop.filter(record.means.front(), record.record_x, record.record_y);
}

struct EnsembleSummary {
  long count = 0;
  Mat2 second_moment = Mat2::Zero();   ///< sample E[<x><x>^T] at t_final
  Mat2 standard_error = Mat2::Zero();  ///< standard error of each entry above
  Vec2 mean = Vec2::Zero();
  CovarianceState conditional;         ///< V(t_final) from the Riccati integration
  CovarianceState predicted;           ///< steady-state unconditional covariance with feedback
  Mat2 z_scores = Mat2::Zero();        ///< (second_moment + V - predicted) / standard_error

  CovarianceState unconditional_estimate() const {
    return CovarianceState::from_matrix(second_moment + conditional.matrix());
  }
};

/// Simulates `count` independent trajectories and summarizes the terminal
/// means. Trajectory i uses stream i of `cfg.seed`, so the result does not
/// depend on `jobs`.
inline EnsembleSummary simulate_ensemble(const ValidatedParams& vp, const CovarianceState& v_init,
                                         const SimulationConfig& cfg, long count, int jobs = 1) {
  if (count < 2) throw Error(ErrorCode::InvalidSpec, "ensemble needs at least 2 trajectories");
  const MeanPropagator prop(vp, v_init, cfg.t_final, cfg.dt, cfg.feedback_gain);
  const auto steps = prop.grid().steps;
  const double sqrt_h = std::sqrt(prop.grid().h);
  std::vector<Vec2> terminal(static_cast<std::size_t>(count));

  auto worker = [&](long begin, long end) {
    for (long i = begin; i < end; ++i) {
      NormalPairStream rng(stream_seed(cfg.seed, static_cast<std::uint64_t>(i)));
      Vec2 x = cfg.mean_init.vec();
      for (long k = 0; k < steps; ++k) {
        Vec2 dw = Vec2::Zero();
        if (prop.measured()) {
          const auto [a, b] = rng.next();
          dw = Vec2(sqrt_h * a, sqrt_h * b);
        }
        x = prop.step(k, x, dw);
      }
      if (!x.allFinite()) throw Error(ErrorCode::NonFiniteState, "non-finite conditional mean");
      terminal[static_cast<std::size_t>(i)] = x;
    }
  };

  const int workers = std::clamp<int>(jobs, 1, static_cast<int>(std::min<long>(count, 256)));
  if (workers == 1) {
    worker(0, count);
  } else {
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    {
      std::vector<std::jthread> pool;
      for (int w = 0; w < workers; ++w) {
        const long begin = count * w / workers;
        const long end = count * (w + 1) / workers;
        pool.emplace_back([&, w, begin, end] {
          try {
            worker(begin, end);
          } catch (...) {
            errors[static_cast<std::size_t>(w)] = std::current_exception();
          }
        });
      }
    }
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  EnsembleSummary out;
  out.count = count;
  Mat2 sum = Mat2::Zero();
  Mat2 sum_sq = Mat2::Zero();
  for (const auto& x : terminal) {
    const Mat2 outer = x * x.transpose();
    out.mean += x;
    sum += outer;
    sum_sq += outer.cwiseProduct(outer);
  }
  const double n = static_cast<double>(count);
  out.mean /= n;
  out.second_moment = sum / n;
  const Mat2 var = (sum_sq / n - out.second_moment.cwiseProduct(out.second_moment)) * (n / (n - 1));
  out.standard_error = (var / n).cwiseSqrt();
  out.conditional = prop.covariances().back();
  out.predicted = unconditional_steady_state(vp, cfg.feedback_gain);
  out.z_scores =
      (out.second_moment + out.conditional.matrix() - out.predicted.matrix()).cwiseQuotient(
          out.standard_error);
  return out;
}

}  // namespace mechsqueeze
