#pragma once

#include <stdexcept>
#include <string>

namespace noisylmi {

/// Malformed caller input: dimension mismatches, invalid enums, bad config values.
struct InvalidInput : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// The signal-to-noise condition on the data Gram failed; carries the offending eigenvalue.
struct AssumptionViolation : std::runtime_error {
  AssumptionViolation(const std::string& what, double lambda_min_value)
      : std::runtime_error(what), lambda_min(lambda_min_value) {}
  double lambda_min;
};

/// A matrix inclusion required as a precondition does not hold; carries the residual.
struct InclusionViolation : std::runtime_error {
  InclusionViolation(const std::string& what, double residual_value)
      : std::runtime_error(what), residual(residual_value) {}
  double residual;
};

/// A matrix that must be invertible is singular beyond tolerance.
struct NumericalRankError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Open-loop simulation exceeded the overflow guard.
struct UnstableExperiment : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Text-format parse failure; carries the 1-based line number.
struct ParseError : std::runtime_error {
  ParseError(const std::string& what, int line_number)
      : std::runtime_error(what + " (line " + std::to_string(line_number) + ")"), line(line_number) {}
  int line;
};

}  // namespace noisylmi
