#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "mechsqueeze/dynamics.hpp"
#include "mechsqueeze/optimize.hpp"
#include "mechsqueeze/parallel.hpp"

using namespace mechsqueeze;

namespace {

SystemParams params(double chi, double delta, double mu, double eta = 1.0, double n = 0.0) {
  SystemParams p;
  p.chi = chi;
  p.delta = delta;
  p.mu = mu;
  p.eta = eta;
  p.n_thermal = n;
  return p;
}

double max_dev(const CovarianceState& a, const CovarianceState& b) {
  return std::max({std::abs(a.v_x - b.v_x), std::abs(a.v_y - b.v_y), std::abs(a.c - b.c)});
}

}  // namespace

TEST(Riccati, SteadyStateIsFixed) {
  const auto vp = validate(params(3.0, 4.0, 0.5, 0.7, 1.0));
  const auto ss = conditional_steady_state(vp).cov;
  const auto traj = integrate_riccati(vp, ss, 10.0, 1e-3);
  for (const auto& v : traj) EXPECT_LE(max_dev(v, ss), 1e-10);
}

TEST(Riccati, OrnsteinUhlenbeckRelaxation) {
  const auto vp = validate(params(0.0, 0.0, 0.0, 1.0, 2.0));
  const double vt = 2.5;
  const double vi = 7.0;
  const double dt = 1e-3;
  const auto traj = integrate_riccati(vp, {vi, vi, 0.0}, 5.0, dt);
  ASSERT_EQ(traj.size(), 5001u);
  for (std::size_t k = 0; k < traj.size(); k += 100) {
    const double t = dt * static_cast<double>(k);
    const double exact = vt + (vi - vt) * std::exp(-2.0 * t);
    EXPECT_NEAR(traj[k].v_x / exact, 1.0, 1e-8);
    EXPECT_NEAR(traj[k].v_y / exact, 1.0, 1e-8);
    EXPECT_NEAR(traj[k].c, 0.0, 1e-14);
  }
}

TEST(Riccati, ConvergesToSteadySolverAtOptimum) {
  const auto base = validate(params(50.0, 0.0, 0.4));
  const auto vp = base.with_delta(optimal_detuning(base).delta_opt);
  const auto ss = conditional_steady_state(vp).cov;
  const double dt = max_step(vp.get());
  const auto traj = integrate_riccati(vp, {0.5, 0.5, 0.0}, 20.0, dt);
  EXPECT_LE(max_dev(traj.back(), ss), 1e-8);
  for (const auto& v : traj) EXPECT_GE(v.det(), 0.25 * (1.0 - 1e-6));
}

TEST(Riccati, StepGuard) {
  const auto vp = validate(params(50.0, 51.0, 0.4));
  EXPECT_DOUBLE_EQ(max_step(vp.get()), 0.01 / 51.0);
  try {
    integrate_riccati(vp, {0.5, 0.5, 0.0}, 1.0, 1e-3);
    FAIL() << "expected StepTooLarge";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::StepTooLarge);
  }
  EXPECT_THROW(integrate_riccati(validate(params(50, 49, 0.1)), {0.5, 0.5, 0.0}, 1.0, 1e-5), Error);
}

TEST(Trajectory, DeterministicDecayWithoutMeasurement) {
  const auto vp = validate(params(0.0, 0.0, 0.0));
  SimulationConfig cfg;
  cfg.t_final = 5.0;
  cfg.dt = 1e-3;
  cfg.mean_init = {1.0, 0.0};
  const auto rec = simulate_trajectory(vp, {0.5, 0.5, 0.0}, cfg);
  EXPECT_TRUE(rec.record_x.empty());
  EXPECT_TRUE(rec.record_y.empty());
  ASSERT_EQ(rec.means.size(), 5001u);
  for (std::size_t k = 0; k < rec.means.size(); k += 250) {
    EXPECT_NEAR(rec.means[k].x_mean, std::pow(1.0 - cfg.dt, static_cast<double>(k)), 1e-12);
    EXPECT_NEAR(rec.means[k].x_mean, std::exp(-rec.times[k]), 3e-3 * std::exp(-rec.times[k]));
    EXPECT_EQ(rec.means[k].y_mean, 0.0);
  }
}

TEST(Trajectory, LengthsAndSeedDeterminism) {
  const auto vp = validate(params(0.5, 0.8, 1.0, 0.9, 0.5));
  SimulationConfig cfg;
  cfg.t_final = 2.0;
  cfg.dt = 1e-3;
  cfg.seed = 99;
  const CovarianceState init{1.0, 1.0, 0.0};
  const auto a = simulate_trajectory(vp, init, cfg);
  const auto b = simulate_trajectory(vp, init, cfg);
  EXPECT_EQ(a.times.size(), 2001u);
  EXPECT_EQ(a.means.size(), a.times.size());
  EXPECT_EQ(a.covariances.size(), a.times.size());
  EXPECT_EQ(a.record_x.size(), a.times.size() - 1);
  EXPECT_EQ(a.record_y.size(), a.times.size() - 1);
  EXPECT_EQ(a.means, b.means);
  EXPECT_EQ(a.record_x, b.record_x);

  cfg.seed = 100;
  const auto c = simulate_trajectory(vp, init, cfg);
  EXPECT_NE(a.means.back(), c.means.back());
  for (std::size_t k = 0; k < a.covariances.size(); ++k) EXPECT_EQ(a.covariances[k], c.covariances[k]);
}

TEST(Trajectory, NonPositiveTimeRejected) {
  const auto vp = validate(params(0.0, 0.0, 1.0));
  SimulationConfig cfg;
  cfg.t_final = 0.0;
  EXPECT_THROW(simulate_trajectory(vp, {0.5, 0.5, 0.0}, cfg), Error);
}

TEST(Refilter, RoundTrip) {
  const auto vp = validate(params(2.0, 2.5, 0.7, 0.6, 1.0));
  SimulationConfig cfg;
  cfg.t_final = 3.0;
  cfg.dt = 1e-3;
  cfg.seed = 5;
  cfg.feedback_gain = 1.5;
  cfg.mean_init = {0.3, -0.2};
  const CovarianceState init{2.0, 1.0, 0.1};
  const auto rec = simulate_trajectory(vp, init, cfg);
  const auto means = refilter(rec, vp, init);
  ASSERT_EQ(means.size(), rec.means.size());
  for (std::size_t k = 0; k < means.size(); ++k) {
    EXPECT_NEAR(means[k].x_mean, rec.means[k].x_mean, 1e-10);
    EXPECT_NEAR(means[k].y_mean, rec.means[k].y_mean, 1e-10);
  }
}

TEST(Refilter, ZeroInnovationsGivePureDrift) {
  const auto vp = validate(params(0.5, 0.8, 1.0));
  const CovarianceState init{0.5, 0.5, 0.0};
  const MeanPropagator prop(vp, init, 2.0, 1e-3, 0.0);
  const std::vector<Vec2> zeros(static_cast<std::size_t>(prop.grid().steps), Vec2::Zero());
  const auto rec = prop.run({1.0, 0.5}, zeros, 0);
  const auto means = refilter(rec, vp, init);

  const Mat2 a = drift_matrix_in_frame(vp);
  Vec2 x(1.0, 0.5);
  for (std::size_t k = 0; k + 1 < means.size(); ++k) x = x + prop.grid().h * (a * x);
  EXPECT_NEAR(means.back().x_mean, x(0), 1e-12);
  EXPECT_NEAR(means.back().y_mean, x(1), 1e-12);
}

TEST(Refilter, PerturbedDetuningDiverges) {
  const auto vp = validate(params(2.0, 2.5, 0.7));
  SimulationConfig cfg;
  cfg.t_final = 3.0;
  cfg.dt = 1e-3;
  const CovarianceState init{1.0, 1.0, 0.0};
  const auto rec = simulate_trajectory(vp, init, cfg);
  const auto other = refilter(rec, vp.with_delta(vp->delta + 0.1), init);
  const double diff = std::hypot(other.back().x_mean - rec.means.back().x_mean,
                                 other.back().y_mean - rec.means.back().y_mean);
  EXPECT_GT(diff, 0.0);
}

TEST(Refilter, MismatchedRecord) {
  const auto unmeasured = validate(params(0.5, 0.8, 0.0));
  SimulationConfig cfg;
  cfg.t_final = 1.0;
  cfg.dt = 1e-3;
  const auto rec = simulate_trajectory(unmeasured, {0.5, 0.5, 0.0}, cfg);
  try {
    refilter(rec, validate(params(0.5, 0.8, 1.0)), {0.5, 0.5, 0.0});
    FAIL() << "expected ParamsMismatch";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ParamsMismatch);
  }
}

TEST(Rng, StreamsAreReproducibleAndDistinct) {
  const auto a = draw_increments(1, 0, 1000, 1.0);
  const auto b = draw_increments(1, 0, 1000, 1.0);
  const auto c = draw_increments(1, 1, 1000, 1.0);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  double m = 0.0;
  double s = 0.0;
  const auto big = draw_increments(3, 0, 200000, 1.0);
  for (const auto& v : big) {
    m += v(0) + v(1);
    s += v(0) * v(0) + v(1) * v(1);
  }
  const double n = 2.0 * static_cast<double>(big.size());
  EXPECT_NEAR(m / n, 0.0, 0.01);
  EXPECT_NEAR(s / n, 1.0, 0.01);
}

TEST(Ensemble, IndependentOfJobCount) {
  const auto vp = validate(params(0.5, 0.8, 1.0));
  SimulationConfig cfg;
  cfg.t_final = 1.0;
  cfg.dt = 1e-3;
  const auto init = conditional_steady_state(vp).cov;
  const auto a = simulate_ensemble(vp, init, cfg, 200, 1);
  const auto b = simulate_ensemble(vp, init, cfg, 200, 3);
  EXPECT_EQ(a.second_moment, b.second_moment);
}

TEST(Ensemble, MatchesSingleTrajectories) {
  const auto vp = validate(params(0.5, 0.8, 1.0));
  SimulationConfig cfg;
  cfg.t_final = 0.5;
  cfg.dt = 1e-3;
  cfg.seed = 8;
  const auto init = conditional_steady_state(vp).cov;
  const auto s = simulate_ensemble(vp, init, cfg, 4, 1);
  Mat2 sum = Mat2::Zero();
  for (std::uint64_t i = 0; i < 4; ++i) {
    const Vec2 x = simulate_trajectory(vp, init, cfg, i).means.back().vec();
    sum += x * x.transpose();
  }
  EXPECT_TRUE(s.second_moment.isApprox(sum / 4.0, 1e-14));
}

TEST(Ensemble, ClosureAtModerateParameters) {
  const auto vp = validate(params(0.5, 0.8, 1.0));
  SimulationConfig cfg;
  cfg.t_final = 8.0;
  cfg.dt = 1e-3;
  cfg.seed = 2024;
  const auto s = simulate_ensemble(vp, conditional_steady_state(vp).cov, cfg, 4000, default_jobs());
  EXPECT_LT(s.z_scores.cwiseAbs().maxCoeff(), 3.5);
}

TEST(Ensemble, FeedbackReducesExcess) {
  const auto vp = validate(params(0.5, 0.8, 1.0));
  const auto cond = conditional_steady_state(vp).cov;
  double prev_predicted = std::numeric_limits<double>::infinity();
  double prev_sampled = std::numeric_limits<double>::infinity();
  for (double g : {0.0, 1.0, 10.0, 100.0}) {
    const auto e = mean_excess_covariance_quarter(vp, cond, g);
    EXPECT_LE(e.v_x + e.v_y, prev_predicted);
    prev_predicted = e.v_x + e.v_y;

    SimulationConfig cfg;
    cfg.t_final = 4.0;
    cfg.dt = 1e-4;
    cfg.feedback_gain = g;
    const auto s = simulate_ensemble(vp, cond, cfg, 300, default_jobs());
    EXPECT_LE(s.second_moment.trace(), prev_sampled);
    prev_sampled = s.second_moment.trace();
  }
}
