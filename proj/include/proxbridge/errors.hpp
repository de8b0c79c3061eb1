#pragma once

#include <stdexcept>
#include <string>

namespace proxbridge {

/// Base class for every error raised by the library. `kind()` is the
/// machine-readable tag written into CLI error reports.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "error"; }
};

/// Inconsistent or unsupported configuration (bad hyperparameters,
/// incompatible integration rule, too-small folds, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "config_error"; }
};

/// Input data or a model definition violates its schema or invariants.
class ValidationError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "validation_error"; }
};

/// A linear system needed for identification is rank deficient.
class RankError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "rank_error"; }
};

/// Factorization failure or an indefinite matrix where PSD was required.
class NumericalError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "numerical_error"; }
};

class IoError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "io_error"; }
};

}  // namespace proxbridge
