#pragma once

// Closed-form optimum of the squeezed variance over detuning in the strong
// conditioning limit z >> gamma^2, and the exact optimum without measurement.
//
// Primed quantities are normalized by sqrt(gamma^2 + z).

#include <cmath>
#include <complex>
#include <numbers>

#include "mechsqueeze/errors.hpp"

namespace mechsqueeze {

struct AnalyticOptimum {
  double delta_offset_prime = 1.0;  ///< Delta'_opt - chi'
  double v_ratio = 1.0;             ///< V_Xopt / V_0
  std::complex<double> g_value;     ///< cube-root intermediate
};

inline AnalyticOptimum analytic_optimum(double chi_prime) {
  if (!(chi_prime >= 0.0) || !std::isfinite(chi_prime)) {
    throw Error(ErrorCode::NegativeRate, "analytic_optimum: chi' must be finite and >= 0");
  }
  const double s3 = std::sqrt(3.0);
  const double c2 = chi_prime * chi_prime;
  const std::complex<double> w(27.0 * c2 * chi_prime,
                               6.0 * s3 * std::sqrt(27.0 * c2 * c2 + 36.0 * c2 + 16.0));
  // std::pow on std::complex takes the principal branch; w lies in the first
  // quadrant so arg(G) is in (0, pi/6].
  const std::complex<double> g = std::pow(w, 1.0 / 3.0);

  AnalyticOptimum out;
  out.g_value = g;
  out.delta_offset_prime = (g.real() + s3 * g.imag() - 3.0 * chi_prime) / 6.0;

  const double u = out.delta_offset_prime;
  const double radicand = 2.0 + 3.0 * u * u - 1.0 / (u * u);
  if (radicand < 0.0) {
    // Tiny negatives are rounding at the u -> 1/sqrt(3) end.
    if (radicand < -1e-9) {
      throw Error(ErrorCode::NegativeRadicand, "analytic_optimum: negative variance radicand");
    }
    out.v_ratio = 0.0;
  } else {
    out.v_ratio = 0.5 * std::sqrt(radicand);
  }
  return out;
}

/// Strong-conditioning lower bound on the optimally detuned variance.
inline double analytic_vx(double chi_prime, double v0) {
  if (!(v0 > 0.0)) throw Error(ErrorCode::NonPositiveVariance, "analytic_vx: v0 must be > 0");
  return v0 * analytic_optimum(chi_prime).v_ratio;
}

/// Exact optimum without measurement: at Delta_opt = chi + gamma the
/// squeezed variance is V_T (chi + 2 gamma) / (2 (chi + gamma)).
inline double no_measurement_ratio(double chi_over_gamma) {
  return (chi_over_gamma + 2.0) / (2.0 * (chi_over_gamma + 1.0));
}

}  // namespace mechsqueeze
