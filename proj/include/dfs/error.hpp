#pragma once

#include <stdexcept>
#include <string>

namespace dfs {

// Base of every error raised by the library. The CLI maps ValidationError and
// ConfigError to exit code 1 and everything else to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input violates a documented precondition (ranges, shapes of paired data).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Tensor or image dimensions are incompatible with the requested operation.
class ShapeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Bad or inconsistent configuration (unknown keys, regime/weight mismatch).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Checkpoint, weight snapshot or dataset file could not be read.
class LoadError : public Error {
 public:
  using Error::Error;
};

// Non-finite values encountered during a computation.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace dfs
