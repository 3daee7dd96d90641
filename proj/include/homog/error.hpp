#pragma once

#include <stdexcept>
#include <string>

namespace homog {

/// Base of every error raised by the library. `kind()` is a stable machine
/// readable tag used by the CLI when it serializes failures.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
  virtual const char* kind() const noexcept { return "error"; }
};

/// A precondition or structural bound was violated. `constraint()` names it.
class ConstraintError : public Error {
 public:
  ConstraintError(std::string constraint, const std::string& what)
      : Error(what), constraint_(std::move(constraint)) {}
  const std::string& constraint() const noexcept { return constraint_; }
  const char* kind() const noexcept override { return "constraint"; }

 private:
  std::string constraint_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "config"; }
};

/// Numerical failure: singular pivots, non-convergence, bad residuals.
class NumericError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "numeric"; }
};

class NonConvergenceError : public NumericError {
 public:
  NonConvergenceError(const std::string& what, double last_residual, int iterations)
      : NumericError(what), last_residual_(last_residual), iterations_(iterations) {}
  double last_residual() const noexcept { return last_residual_; }
  int iterations() const noexcept { return iterations_; }
  const char* kind() const noexcept override { return "non_convergence"; }

 private:
  double last_residual_;
  int iterations_;
};

class IoError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "io"; }
};

}  // namespace homog
