#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "mechsqueeze/model.hpp"

using namespace mechsqueeze;

namespace {

SystemParams params(double chi, double delta, double mu = 0.0, double eta = 1.0, double n = 0.0) {
  SystemParams p;
  p.chi = chi;
  p.delta = delta;
  p.mu = mu;
  p.eta = eta;
  p.n_thermal = n;
  return p;
}

}  // namespace

TEST(Validate, DefaultsAreValid) { EXPECT_NO_THROW(validate(SystemParams{})); }

TEST(Validate, EfficiencyAboveOne) {
  SystemParams p;
  p.eta = 1.5;
  try {
    validate(p);
    FAIL() << "expected ParameterError";
  } catch (const ParameterError& e) {
    EXPECT_TRUE(e.has(ErrorCode::EfficiencyOutOfRange));
  }
}

TEST(Validate, ListsEveryViolation) {
  SystemParams p;
  p.gamma = -1.0;
  p.eta = -0.1;
  p.mu = -2.0;
  p.n_thermal = -1.0;
  try {
    validate(p);
    FAIL() << "expected ParameterError";
  } catch (const ParameterError& e) {
    EXPECT_TRUE(e.has(ErrorCode::NonPositiveGamma));
    EXPECT_TRUE(e.has(ErrorCode::EfficiencyOutOfRange));
    EXPECT_TRUE(e.has(ErrorCode::NegativeRate));
    EXPECT_GE(e.violations().size(), 4u);
  }
}

TEST(Validate, NonFiniteRejected) {
  SystemParams p;
  p.delta = std::nan("");
  EXPECT_THROW(validate(p), ParameterError);
}

TEST(Validate, DoesNotMutateInput) {
  const SystemParams p = params(50.0, 50.99, 0.1);
  const auto vp = validate(p);
  EXPECT_EQ(vp->chi, 50.0);
  EXPECT_EQ(vp->delta, 50.99);
  EXPECT_TRUE(is_stable(vp));
}

TEST(Stability, Examples) {
  EXPECT_TRUE(is_stable(validate(params(0, 0))));
  EXPECT_FALSE(is_stable(validate(params(1, 0))));
  EXPECT_FALSE(is_stable(validate(params(50, 49))));
  EXPECT_TRUE(is_stable(validate(params(50, 50))));
}

TEST(Stability, EigenvalueFormAgreesAndSymmetries) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  for (int i = 0; i < 2000; ++i) {
    const double chi = u(rng);
    const double delta = u(rng) - 2.5;
    const double gamma = 0.1 + u(rng);
    SystemParams p = params(chi, delta);
    p.gamma = gamma;
    if (std::abs(chi * chi - delta * delta - gamma * gamma) < 1e-9) continue;
    const auto vp = validate(p);
    EXPECT_EQ(is_stable(vp), is_stable_by_eigenvalues(vp));
    EXPECT_EQ(is_stable(vp), is_stable(vp.with_delta(-delta)));
    SystemParams scaled = p;
    scaled.gamma *= 3.0;
    scaled.chi *= 3.0;
    scaled.delta *= 3.0;
    EXPECT_EQ(is_stable(vp), is_stable(validate(scaled)));
  }
}

TEST(Derived, MeasurementOff) {
  const auto d = derived(validate(params(0, 0, 0.0, 1.0, 3.0)));
  EXPECT_EQ(d.z, 0.0);
  EXPECT_EQ(d.n_ba, 0.0);
  EXPECT_DOUBLE_EQ(d.diffusion, 7.0);
}

TEST(Derived, Examples) {
  auto d = derived(validate(params(0, 0, 1.0, 1.0, 0.5)));
  EXPECT_DOUBLE_EQ(d.n_ba, 0.5);
  EXPECT_DOUBLE_EQ(d.z, 12.0);
  EXPECT_DOUBLE_EQ(d.diffusion, 3.0);

  d = derived(validate(params(0, 0, 0.1, 1.0, 1000.0)));
  EXPECT_NEAR(d.z, 800.44, 1e-9);
}

TEST(Derived, DiffusionAtLeastGamma) {
  EXPECT_DOUBLE_EQ(derived(validate(params(0, 0))).diffusion, 1.0);
  EXPECT_GT(derived(validate(params(0, 0, 0.1))).diffusion, 1.0);
}

TEST(Derived, DimensionlessRescalingInvariance) {
  SystemParams p = params(2.0, 1.5, 0.7, 0.6, 4.0);
  SystemParams q = p;
  const double s = 3.7;
  q.gamma *= s;
  q.chi *= s;
  q.delta *= s;
  q.mu *= s;
  const auto a = derived(validate(p));
  const auto b = derived(validate(q));
  EXPECT_NEAR(a.z / (p.gamma * p.gamma), b.z / (q.gamma * q.gamma), 1e-12);
  EXPECT_NEAR(a.chi_prime, b.chi_prime, 1e-12);
  EXPECT_NEAR(a.n_ba, b.n_ba, 1e-12);
}

TEST(Derived, ChiPrimeEstimateAgreesInWeakBackActionLimit) {
  // The estimate drops gamma^2 against z and the back-action phonons, so its
  // relative error is of order gamma^2 / z.
  const PhysicalParams phys{2.0 * std::numbers::pi * 1e6, 1e5, 1e-4};
  std::vector<double> errors;
  for (double n : {1e6, 1e8}) {
    SystemParams p;
    p.mu = 1e-4;
    p.eta = 0.5;
    p.n_thermal = n;
    p.chi = 0.5 * phys.quality * phys.spring_mod_ratio;
    const auto d = derived(validate(p));
    const double err = std::abs(chi_prime_estimate(phys, p.mu, p.eta, p.n_thermal) / d.chi_prime - 1.0);
    EXPECT_LE(err, p.gamma * p.gamma / d.z) << "N = " << n;
    errors.push_back(err);
  }
  EXPECT_LT(errors[1], 0.02 * errors[0]);
}

TEST(Decibel, Examples) {
  EXPECT_DOUBLE_EQ(to_db(0.5), 0.0);
  EXPECT_FALSE(std::signbit(to_db(0.5)));
  EXPECT_NEAR(to_db(0.25), 3.0103, 1e-4);
  EXPECT_NEAR(to_db(0.125), 6.0206, 1e-4);
  EXPECT_GT(to_db(0.4), 0.0);
  EXPECT_LT(to_db(0.6), 0.0);
}

TEST(Decibel, RoundTrip) {
  for (double v : {1e-6, 0.01, 0.3, 0.5, 2.0, 1e4}) {
    EXPECT_NEAR(from_db(to_db(v)) / v, 1.0, 1e-12);
  }
}

TEST(Decibel, NonPositiveVariance) {
  EXPECT_THROW(to_db(0.0), Error);
  EXPECT_THROW(to_db(-1.0), Error);
  try {
    to_db(0.0);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonPositiveVariance);
  }
}

TEST(Physical, MapsChiAndWarns) {
  SystemParams base;
  base.mu = 0.3;
  const auto m = from_physical({1e7, 1e4, 0.01}, base);
  EXPECT_DOUBLE_EQ(m.params.gamma, 1.0);
  EXPECT_DOUBLE_EQ(m.params.chi, 50.0);
  EXPECT_DOUBLE_EQ(m.params.mu, 0.3);
  EXPECT_TRUE(m.warnings.empty());

  const auto w = from_physical({1e7, 10.0, 0.5}, base);
  EXPECT_EQ(w.warnings.size(), 2u);
  EXPECT_THROW(from_physical({-1.0, 10.0, 0.1}, base), ParameterError);
}
