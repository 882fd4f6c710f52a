#pragma once

#include <stdexcept>
#include <string>

namespace voldev {

enum class ErrorCode {
  singular_at_zero,
  wrong_variant,
  domain_error,
  no_convergence,
  negative_argument,
  invalid_model,
  factorization_failure,
  not_applicable,
  negative_path,
  degenerate_coefficients,
  solver_failure,
  singular_l,
  price_out_of_bounds,
  rate_unavailable,
  insufficient_hits,
};

inline const char* to_string(ErrorCode c) {
  switch (c) {
    case ErrorCode::singular_at_zero: return "SingularAtZero";
    case ErrorCode::wrong_variant: return "WrongVariant";
    case ErrorCode::domain_error: return "DomainError";
    case ErrorCode::no_convergence: return "NoConvergence";
    case ErrorCode::negative_argument: return "NegativeArgument";
    case ErrorCode::invalid_model: return "InvalidModel";
    case ErrorCode::factorization_failure: return "FactorizationFailure";
    case ErrorCode::not_applicable: return "NotApplicable";
    case ErrorCode::negative_path: return "NegativePath";
    case ErrorCode::degenerate_coefficients: return "DegenerateCoefficients";
    case ErrorCode::solver_failure: return "SolverFailure";
    case ErrorCode::singular_l: return "SingularL";
    case ErrorCode::price_out_of_bounds: return "PriceOutOfBounds";
    case ErrorCode::rate_unavailable: return "RateUnavailable";
    case ErrorCode::insufficient_hits: return "InsufficientHits";
  }
  return "Unknown";
}

// Domain failures. The CLI maps these to exit code 1.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Variational solve that missed its constraint; carries the best value seen.
class SolverFailure : public Error {
 public:
  SolverFailure(double best_value, double violation)
      : Error(ErrorCode::solver_failure, "constraint violation " + std::to_string(violation) +
                                             " after continuation, best value " + std::to_string(best_value)),
        best_value(best_value),
        violation(violation) {}
  double best_value, violation;
};

// Malformed configuration. The CLI maps these to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace voldev
