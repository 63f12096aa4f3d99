#pragma once

#include <stdexcept>
#include <string>

namespace dggm {

/// Invalid run configuration or hyperparameter (CLI exit code 2).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed or inconsistent input data (CLI exit code 3).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical failure: Cholesky breakdown, non-convergence (CLI exit code 4).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Every particle weight is zero or non-finite.
class DegenerateCloud : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace dggm
