#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mechsqueeze {

enum class ErrorCode {
  NonPositiveGamma,
  EfficiencyOutOfRange,
  NegativeRate,
  NonFiniteParameter,
  NonPositiveVariance,
  UnstableParameters,
  NoConvergence,
  NoStableDetuning,
  NegativeRadicand,
  StepTooLarge,
  PositivityLost,
  NonFiniteState,
  ParamsMismatch,
  InvalidSpec,
  Io,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonPositiveGamma: return "NonPositiveGamma";
    case ErrorCode::EfficiencyOutOfRange: return "EfficiencyOutOfRange";
    case ErrorCode::NegativeRate: return "NegativeRate";
    case ErrorCode::NonFiniteParameter: return "NonFiniteParameter";
    case ErrorCode::NonPositiveVariance: return "NonPositiveVariance";
    case ErrorCode::UnstableParameters: return "UnstableParameters";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::NoStableDetuning: return "NoStableDetuning";
    case ErrorCode::NegativeRadicand: return "NegativeRadicand";
    case ErrorCode::StepTooLarge: return "StepTooLarge";
    case ErrorCode::PositivityLost: return "PositivityLost";
    case ErrorCode::NonFiniteState: return "NonFiniteState";
    case ErrorCode::ParamsMismatch: return "ParamsMismatch";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

/// Base exception for every failure raised by the library. Carries a
/// machine-readable code next to the human-readable message.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

struct Violation {
  ErrorCode code;
  std::string message;
};

/// Raised by validate(); lists every violated constraint, not only the first.
class ParameterError : public Error {
 public:
  explicit ParameterError(std::vector<Violation> violations)
      : Error(violations.empty() ? ErrorCode::NegativeRate : violations.front().code,
              join(violations)),
        violations_(std::move(violations)) {}

  const std::vector<Violation>& violations() const noexcept { return violations_; }

  bool has(ErrorCode code) const noexcept {
    for (const auto& v : violations_) {
      if (v.code == code) return true;
    }
    return false;
  }

 private:
  static std::string join(const std::vector<Violation>& violations) {
    std::string out = "invalid parameters:";
    for (const auto& v : violations) {
      out += " [";
      out += to_string(v.code);
      out += "] ";
      out += v.message;
      out += ';';
    }
    return out;
  }

  std::vector<Violation> violations_;
};

/// Numerical non-convergence, with the diagnostics a caller needs to decide
/// whether to retry with different options.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& message, double residual, long iterations)
      : Error(ErrorCode::NoConvergence,
              message + " (residual " + std::to_string(residual) + ", iterations " +
                  std::to_string(iterations) + ")"),
        residual_(residual),
        iterations_(iterations) {}

  double residual() const noexcept { return residual_; }
  long iterations() const noexcept { return iterations_; }

 private:
  double residual_;
  long iterations_;
};

}  // namespace mechsqueeze
