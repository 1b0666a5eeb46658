#pragma once

#include <stdexcept>
#include <string>

namespace lpn {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid hyperparameters or mismatched dimensions.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// API misuse, e.g. asking for the gradient of a non-scalar.
class UsageError : public Error {
 public:
  using Error::Error;
};

class UnsupportedOrderError : public UsageError {
 public:
  using UsageError::UsageError;
};

class LoadError : public Error {
 public:
  using Error::Error;
};

class IngestionError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

class MetricError : public Error {
 public:
  using Error::Error;
};

}  // namespace lpn
