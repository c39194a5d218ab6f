#pragma once

#include <stdexcept>
#include <string>

namespace eblab {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Violated preconditions on arguments.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Quadrature non-convergence, tail certification, normalization underflow.
class NumericError : public Error {
 public:
  using Error::Error;
};

class DegenerateDensity : public NumericError {
 public:
  using NumericError::NumericError;
};

class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& what)
      : Error(what), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

class UnknownEstimator : public Error {
 public:
  explicit UnknownEstimator(const std::string& name)
      : Error("unknown estimator: " + name), name_(name) {}
  const std::string& name() const noexcept { return name_; }

 private:
  std::string name_;
};

}  // namespace eblab
