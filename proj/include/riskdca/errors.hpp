#pragma once

#include <stdexcept>
#include <string>

namespace riskdca {

// Bad user-supplied configuration (counts, fractions, paths, keys).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed input file; message names row and column where possible.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Argument outside the mathematical domain of an operation.
struct DomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Metric has no defined value on the given sample (e.g. empty class).
struct MetricUndefined : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Calibration curve cannot be inverted (slope <= 0).
struct NonInvertible : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Optimizer diverged or produced non-finite values.
struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Iterative fit stopped before reaching tolerance; carries the last iterate.
struct ConvergenceError : std::runtime_error {
  ConvergenceError(const std::string& msg, double intercept_, double slope_,
                   double grad_norm_)
      : std::runtime_error(msg),
        intercept(intercept_),
        slope(slope_),
        grad_norm(grad_norm_) {}
  double intercept;
  double slope;
  double grad_norm;
};

}  // namespace riskdca
