#pragma once

#include <stdexcept>
#include <string>

namespace fdbss {

// Invalid configuration or arguments. CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or numerically unusable data. CLI maps this to exit code 3.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Rank-deficient covariance at one frequency bin. Callers substitute an
// identity unmixing for the offending bin instead of aborting the run.
class DegenerateBinError : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace fdbss
