#pragma once

// Parameters of a parametrically driven, continuously measured mechanical
// oscillator in the frame rotating at half the pump frequency.
//
// Quadratures X, Y are dimensionless, normalized so that the ground state has
// V_X = V_Y = 1/2. All rates share one unit; the CLI uses gamma = 1.

#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "mechsqueeze/errors.hpp"

namespace mechsqueeze {

/// Zero-point quadrature variance.
inline constexpr double kZeroPointVariance = 0.5;

struct SystemParams {
  double gamma = 1.0;                    ///< amplitude damping rate
  double chi = 0.0;                      ///< parametric nonlinearity, omega_m k_r / (2 k_0)
  double delta = 0.0;                    ///< pump half-detuning: omega_d = 2 (omega_m + delta)
  double theta = std::numbers::pi / 4;   ///< drive phase relative to the lock-in reference
  double mu = 0.0;                       ///< measurement rate
  double eta = 1.0;                      ///< detection efficiency in [0, 1]
  double n_thermal = 0.0;                ///< mean bath phonon number (real valued)

  friend bool operator==(const SystemParams&, const SystemParams&) = default;
};

/// Device-level description used only to derive chi / gamma.
struct PhysicalParams {
  double omega_m = 0.0;           ///< mechanical angular frequency
  double quality = 0.0;           ///< Q = omega_m / gamma
  double spring_mod_ratio = 0.0;  ///< k_r / k_0
};

struct DerivedQuantities {
  double z = 0.0;          ///< conditioning parameter 8 eta mu gamma (N + N_BA + 1/2)
  double n_ba = 0.0;       ///< back-action phonons mu / (2 gamma)
  double chi_prime = 0.0;  ///< chi / sqrt(gamma^2 + z)
  double diffusion = 0.0;  ///< per-quadrature diffusion 2 gamma (N + 1/2) + mu
};

/// SystemParams that passed validate(). Only validate() can create one, so
/// functions taking this type never see out-of-range input.
class ValidatedParams {
 public:
  const SystemParams& get() const noexcept { return params_; }
  const SystemParams* operator->() const noexcept { return &params_; }

  ValidatedParams with_delta(double delta) const;
  ValidatedParams with_chi(double chi) const;
  ValidatedParams with_mu(double mu) const;
  ValidatedParams with_theta(double theta) const;

 private:
  explicit ValidatedParams(const SystemParams& p) : params_(p) {}
  friend ValidatedParams validate(const SystemParams& params);

  SystemParams params_;
};

inline ValidatedParams validate(const SystemParams& p) {
  std::vector<Violation> out;
  if (!(p.gamma > 0.0) || !std::isfinite(p.gamma)) {
    out.push_back({ErrorCode::NonPositiveGamma, "gamma must be finite and > 0"});
  }
  if (!(p.eta >= 0.0 && p.eta <= 1.0)) {
    out.push_back({ErrorCode::EfficiencyOutOfRange, "eta must lie in [0, 1]"});
  }
  if (!(p.mu >= 0.0) || !std::isfinite(p.mu)) {
    out.push_back({ErrorCode::NegativeRate, "mu must be finite and >= 0"});
  }
  if (!(p.chi >= 0.0) || !std::isfinite(p.chi)) {
    out.push_back({ErrorCode::NegativeRate, "chi must be finite and >= 0"});
  }
  if (!(p.n_thermal >= 0.0) || !std::isfinite(p.n_thermal)) {
    out.push_back({ErrorCode::NegativeRate, "n_thermal must be finite and >= 0"});
  }
  if (!std::isfinite(p.delta)) {
    out.push_back({ErrorCode::NonFiniteParameter, "delta must be finite"});
  }
  if (!std::isfinite(p.theta)) {
    out.push_back({ErrorCode::NonFiniteParameter, "theta must be finite"});
  }
  if (!out.empty()) throw ParameterError(std::move(out));
  return ValidatedParams(p);
}

inline ValidatedParams ValidatedParams::with_delta(double delta) const {
  SystemParams p = params_;
  p.delta = delta;
  return validate(p);
}

inline ValidatedParams ValidatedParams::with_chi(double chi) const {
  SystemParams p = params_;
  p.chi = chi;
  return validate(p);
}

inline ValidatedParams ValidatedParams::with_mu(double mu) const {
  SystemParams p = params_;
  p.mu = mu;
  return validate(p);
}

inline ValidatedParams ValidatedParams::with_theta(double theta) const {
  SystemParams p = params_;
  p.theta = theta;
  return validate(p);
}

/// Below-threshold condition chi^2 < delta^2 + gamma^2 (strict).
inline bool is_stable(const ValidatedParams& vp) {
  const auto& p = vp.get();
  return p.chi * p.chi < p.delta * p.delta + p.gamma * p.gamma;
}

/// Eigenvalues -gamma +/- sqrt(chi^2 - delta^2) of the drift matrix.
inline std::pair<std::complex<double>, std::complex<double>> drift_eigenvalues(
    const ValidatedParams& vp) {
  const auto& p = vp.get();
  const std::complex<double> root =
      std::sqrt(std::complex<double>(p.chi * p.chi - p.delta * p.delta, 0.0));
  return {-p.gamma + root, -p.gamma - root};
}

inline bool is_stable_by_eigenvalues(const ValidatedParams& vp) {
  const auto [l1, l2] = drift_eigenvalues(vp);
  return l1.real() < 0.0 && l2.real() < 0.0;
}

inline double diffusion_constant(const SystemParams& p) {
  return 2.0 * p.gamma * (p.n_thermal + 0.5) + p.mu;
}

inline DerivedQuantities derived(const ValidatedParams& vp) {
  const auto& p = vp.get();
  DerivedQuantities d;
  d.n_ba = p.mu / (2.0 * p.gamma);
  d.z = 8.0 * p.eta * p.mu * p.gamma * (p.n_thermal + d.n_ba + 0.5);
  d.chi_prime = p.chi / std::sqrt(p.gamma * p.gamma + d.z);
  d.diffusion = diffusion_constant(p);
  return d;
}

/// Squeezing in dB relative to the zero-point variance; positive means the
/// variance is below 1/2.
inline double to_db(double variance) {
  if (!(variance > 0.0)) {
    throw Error(ErrorCode::NonPositiveVariance, "to_db: variance must be > 0");
  }
  return 10.0 * std::log10(kZeroPointVariance / variance);
}

inline double from_db(double db) { return kZeroPointVariance * std::pow(10.0, -db / 10.0); }

struct PhysicalMapping {
  SystemParams params;
  std::vector<std::string> warnings;
};

/// Converts device parameters to gamma-normalized model parameters. Only
/// gamma and chi are taken from `physical`; every other field of `base` is
/// assumed to already be in units of gamma.
inline PhysicalMapping from_physical(const PhysicalParams& physical, SystemParams base) {
  std::vector<Violation> bad;
  if (!(physical.omega_m > 0.0)) bad.push_back({ErrorCode::NegativeRate, "omega_m must be > 0"});
  if (!(physical.quality > 0.0)) bad.push_back({ErrorCode::NegativeRate, "quality must be > 0"});
  if (!(physical.spring_mod_ratio >= 0.0)) {
    bad.push_back({ErrorCode::NegativeRate, "spring_mod_ratio must be >= 0"});
  }
  if (!bad.empty()) throw ParameterError(std::move(bad));

  PhysicalMapping out;
  out.params = base;
  out.params.gamma = 1.0;
  // chi / gamma = (omega_m k_r / 2 k_0) / (omega_m / Q)
  out.params.chi = 0.5 * physical.quality * physical.spring_mod_ratio;
  if (physical.spring_mod_ratio > 0.1) {
    out.warnings.push_back("k_r/k_0 = " + std::to_string(physical.spring_mod_ratio) +
                           " exceeds 0.1; small-modulation assumption is doubtful");
  }
  const double chi_over_omega = 0.5 * physical.spring_mod_ratio;
  if (chi_over_omega > 0.1) {
    out.warnings.push_back("chi/omega_m = " + std::to_string(chi_over_omega) +
                           " exceeds 0.1; rotating-wave approximation is doubtful");
  }
  return out;
}

/// High-temperature, negligible-back-action estimate of chi' from device
/// parameters. Diagnostic only; derived().chi_prime is the exact value.
inline double chi_prime_estimate(const PhysicalParams& physical, double mu_over_gamma,
                                 double eta, double n_thermal) {
  return physical.quality * physical.spring_mod_ratio /
         (4.0 * std::sqrt(2.0 * n_thermal * eta * mu_over_gamma));
}

}  // namespace mechsqueeze
