#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "mechsqueeze/analytic.hpp"
#include "mechsqueeze/optimize.hpp"

using namespace mechsqueeze;

namespace {

// Parameters with z / gamma^2 = z_target at mu = eta = 1, chi from chi'.
ValidatedParams high_conditioning(double z_target, double chi_prime) {
  SystemParams p;
  p.mu = 1.0;
  p.eta = 1.0;
  p.n_thermal = z_target / 8.0 - 1.0;
  p.chi = chi_prime * std::sqrt(1.0 + z_target);
  return validate(p);
}

}  // namespace

TEST(Analytic, WeakPumpLimit) {
  const auto a = analytic_optimum(1e-6);
  EXPECT_NEAR(a.delta_offset_prime, 1.0, 1e-3);
  EXPECT_NEAR(a.v_ratio, 1.0, 1e-3);
  EXPECT_NEAR(analytic_vx(1e-6, 0.7), 0.7, 1e-3);
}

TEST(Analytic, StrongPumpLimit) {
  const auto a = analytic_optimum(1e6);
  EXPECT_NEAR(a.delta_offset_prime, 1.0 / std::sqrt(3.0), 1e-3);
  EXPECT_LT(a.v_ratio, 1e-3);
  EXPECT_LT(analytic_vx(1e6, 2.0), 2e-3);
}

TEST(Analytic, PumpOffExact) {
  const auto a = analytic_optimum(0.0);
  EXPECT_NEAR(a.delta_offset_prime, 1.0, 1e-12);
  EXPECT_NEAR(a.v_ratio, 1.0, 1e-12);
}

TEST(Analytic, RangeMonotoneAndReal) {
  double prev_ratio = 1.0 + 1e-15;
  for (double lg = -6.0; lg <= 6.0; lg += 0.05) {
    const double cp = std::pow(10.0, lg);
    const auto a = analytic_optimum(cp);
    EXPECT_GT(a.delta_offset_prime, 1.0 / std::sqrt(3.0));
    EXPECT_LE(a.delta_offset_prime, 1.0);
    EXPECT_GE(a.v_ratio, 0.0);
    EXPECT_LE(a.v_ratio, prev_ratio);
    prev_ratio = a.v_ratio;
    // The offset is the real part of a complex combination whose imaginary
    // part must cancel.
    const double s3 = std::sqrt(3.0);
    const std::complex<double> g = a.g_value;
    const std::complex<double> full =
        (g * std::complex<double>(1.0, -s3) + std::conj(g) * std::complex<double>(1.0, s3)) / 12.0 -
        cp / 2.0;
    EXPECT_LE(std::abs(full.imag()), 1e-12 * std::abs(full.real()) + 1e-15);
    // Both forms subtract terms of size chi', so rounding scales with it.
    EXPECT_NEAR(full.real(), a.delta_offset_prime, 1e-15 * (std::abs(g) + cp) + 1e-15);
  }
}

TEST(Analytic, InvalidInput) {
  EXPECT_THROW(analytic_optimum(-1.0), Error);
  EXPECT_THROW(analytic_optimum(std::nan("")), Error);
  EXPECT_THROW(analytic_vx(1.0, 0.0), Error);
}

TEST(Analytic, NoMeasurementRatio) {
  EXPECT_DOUBLE_EQ(no_measurement_ratio(0.0), 1.0);
  EXPECT_NEAR(no_measurement_ratio(1e9), 0.5, 1e-9);
}

// Brute-force minimization of the full steady state at z / gamma^2 = 1e6.
TEST(Analytic, BruteForceOracleAtChiPrimeOne) {
  const auto vp = high_conditioning(1e6, 1.0);
  const double s = std::sqrt(1.0 + derived(vp).z);
  const auto a = analytic_optimum(1.0);
  double best = std::numeric_limits<double>::infinity();
  double best_offset = 0.0;
  for (int i = 0; i <= 4000; ++i) {
    const double offset = 0.3 + 1.0 * i / 4000.0;
    const double v = conditional_steady_state(vp.with_delta(vp->chi + offset * s)).cov.v_x;
    if (v < best) {
      best = v;
      best_offset = offset;
    }
  }
  EXPECT_NEAR(best / v0(vp), a.v_ratio, 0.005 * a.v_ratio);
  EXPECT_NEAR(best_offset, a.delta_offset_prime, 0.005);
}

TEST(Analytic, BranchMatchesNumericStationaryPoint) {
  for (double cp : {0.01, 1.0, 100.0}) {
    const auto a = analytic_optimum(cp);
    EXPECT_GT(a.delta_offset_prime, 1.0 / std::sqrt(3.0));
    EXPECT_LT(a.delta_offset_prime, 1.0);
    const auto vp = high_conditioning(1e6, cp);
    const double s = std::sqrt(1.0 + derived(vp).z);
    const auto opt = optimal_detuning(vp);
    EXPECT_NEAR((opt.delta_opt - vp->chi) / s, a.delta_offset_prime, 5e-3) << "chi' = " << cp;
  }
}

// The closed form is the leading term in 1/sqrt(z), so the residual slope of
// the exact variance at the predicted detuning must fall off the same way.
TEST(Analytic, Stationarity) {
  for (double cp : {0.3, 1.0, 3.0}) {
    std::vector<double> slopes;
    for (double z : {1e4, 1e6}) {
      const auto vp = high_conditioning(z, cp);
      const double s = std::sqrt(1.0 + derived(vp).z);
      const double delta = (analytic_optimum(cp).delta_offset_prime + cp) * s;
      const double h = 1e-5 * s;
      const double vx = conditional_steady_state(vp.with_delta(delta)).cov.v_x;
      const double slope = (conditional_steady_state(vp.with_delta(delta + h)).cov.v_x -
                            conditional_steady_state(vp.with_delta(delta - h)).cov.v_x) /
                           (2.0 * h);
      const double normalized = std::abs(slope) * s / vx;
      EXPECT_LE(normalized, 0.2 / std::sqrt(z)) << "z = " << z << ", chi' = " << cp;
      slopes.push_back(normalized);
    }
    EXPECT_NEAR(slopes[0] / slopes[1], 10.0, 1.0) << "chi' = " << cp;
  }
}

TEST(Analytic, LowerBound) {
  for (double z : {1e4, 1e5, 1e6}) {
    for (double cp : {0.1, 0.5, 1.0, 2.0, 5.0, 10.0}) {
      const auto vp = high_conditioning(z, cp);
      const double numeric = optimal_detuning(vp).v_x_opt;
      const double bound = analytic_vx(cp, v0(vp));
      EXPECT_LE(bound, numeric * 1.05) << "z = " << z << ", chi' = " << cp;
    }
  }
}
