#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace qlabc {

// Base of every error raised by the library. The CLI maps subclasses to exit
// codes through exit_code().
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 2; }
};

// Usage or configuration problem of the caller.
class ConfigError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 1; }
};

class IoError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
};

class SchemaMismatch : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 1; }
};

class NotPositiveDefinite : public Error {
 public:
  using Error::Error;
};

class DomainViolation : public Error {
 public:
  using Error::Error;
};

class OutOfDomain : public Error {
 public:
  using Error::Error;
};

class InsufficientData : public Error {
 public:
  using Error::Error;
};

class DegenerateDesign : public Error {
 public:
  using Error::Error;
};

class DegenerateSample : public Error {
 public:
  using Error::Error;
};

class OutsideImage : public Error {
 public:
  using Error::Error;
};

class InitFailed : public Error {
 public:
  using Error::Error;
};

class AllWeightsZero : public Error {
 public:
  using Error::Error;
};

class SimulationError : public Error {
 public:
  using Error::Error;
};

// Raised by solve_nonlinear; carries the best iterate found.
class NonConverged : public Error {
 public:
  NonConverged(const std::string& what, Eigen::VectorXd best, double residual)
      : Error(what), best_(std::move(best)), residual_(residual) {}

  const Eigen::VectorXd& best() const noexcept { return best_; }
  double residual() const noexcept { return residual_; }

 private:
  Eigen::VectorXd best_;
  double residual_;
};

}  // namespace qlabc
