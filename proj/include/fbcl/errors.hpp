#pragma once

#include <stdexcept>
#include <string>

namespace fbcl {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the domain of an operation (non-finite amplitude,
/// nonpositive rate, flux speed of the wrong sign, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Vector or matrix sizes that do not match.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A construction that needs a positivity certificate (a_lower > 0) that is
/// not available.
class CertificateError : public Error {
 public:
  using Error::Error;
};

/// A solver step was requested with a time step above the CFL limit.
class CflError : public Error {
 public:
  CflError(const std::string& what, double required_dt)
      : Error(what), required_dt_(required_dt) {}
  double required_dt() const noexcept { return required_dt_; }

 private:
  double required_dt_;
};

/// Non-finite values or a violated discrete invariant during a run.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Characteristic recursion of the exact linear solution ran too deep.
class DepthError : public Error {
 public:
  DepthError(const std::string& what, int required_depth)
      : Error(what), required_depth_(required_depth) {}
  int required_depth() const noexcept { return required_depth_; }

 private:
  int required_depth_;
};

/// Caller-side precondition that was not met.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Scenario configuration that failed validation. `field` is a JSON pointer
/// to the offending entry.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& field, const std::string& what)
      : Error(field + ": " + what), field_(field) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace fbcl
