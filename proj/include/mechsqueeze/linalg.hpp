#pragma once

#include <algorithm>
#include <cmath>
#include <optional>

#include <Eigen/Dense>

namespace mechsqueeze {

using Mat2 = Eigen::Matrix2d;
using Vec2 = Eigen::Vector2d;

/// Symmetric 2x2 second-moment matrix of the quadratures.
struct CovarianceState {
  double v_x = 0.5;
  double v_y = 0.5;
  double c = 0.0;

  Mat2 matrix() const {
    Mat2 m;
    m << v_x, c, c, v_y;
    return m;
  }

  static CovarianceState from_matrix(const Mat2& m) {
    return {m(0, 0), m(1, 1), 0.5 * (m(0, 1) + m(1, 0))};
  }

  double det() const { return v_x * v_y - c * c; }
  bool positive_definite() const { return v_x > 0.0 && v_y > 0.0 && det() > 0.0; }
  double max_abs() const { return std::max({std::abs(v_x), std::abs(v_y), std::abs(c)}); }

  friend bool operator==(const CovarianceState&, const CovarianceState&) = default;
};

inline Mat2 rotation(double angle) {
  Mat2 r;
  r << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
  return r;
}

/// R(angle) V R(angle)^T: the covariance of the rotated quadrature vector.
inline CovarianceState rotate(const CovarianceState& cov, double angle) {
  const Mat2 r = rotation(angle);
  return CovarianceState::from_matrix(r * cov.matrix() * r.transpose());
}

/// Solves A X + X A^T + Q = 0 for symmetric Q. Returns nullopt when the
/// operator is singular (some lambda_i + lambda_j = 0).
inline std::optional<Mat2> solve_lyapunov(const Mat2& a, const Mat2& q) {
  // Unknowns (x11, x12, x22) of the symmetric solution.
  Eigen::Matrix3d m;
  m << 2.0 * a(0, 0), 2.0 * a(0, 1), 0.0,
       a(1, 0), a(0, 0) + a(1, 1), a(0, 1),
       0.0, 2.0 * a(1, 0), 2.0 * a(1, 1);
  const Eigen::Vector3d rhs(-q(0, 0), -0.5 * (q(0, 1) + q(1, 0)), -q(1, 1));
  Eigen::FullPivLU<Eigen::Matrix3d> lu(m);
  if (!lu.isInvertible()) return std::nullopt;
  const Eigen::Vector3d x = lu.solve(rhs);
  Mat2 out;
  out << x(0), x(1), x(1), x(2);
  return out;
}

inline double max_abs(const Mat2& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace mechsqueeze
