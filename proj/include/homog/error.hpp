#pragma once

#include <stdexcept>
#include <string>

namespace homog {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller passed inconsistent arguments (dimension mismatch, bad parameters).
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Malformed document; `path()` is a JSON pointer to the offending entry.
class ParseError : public UsageError {
 public:
  ParseError(const std::string& what, std::string path) : UsageError(what), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

/// The operation is not defined for this kind of generator.
class UnsupportedOperation : public Error {
 public:
  using Error::Error;
};

/// Two objects live on incompatible cells or domains.
class GeometryMismatch : public Error {
 public:
  using Error::Error;
};

/// A quadrature or histogram would exceed the configured work cap.
class BudgetError : public Error {
 public:
  using Error::Error;
};

/// Operator or density violates its structural hypotheses on the probe set.
class InvalidOperator : public Error {
 public:
  using Error::Error;
};

/// An iterative solver stopped without reaching its tolerance.
class NonConvergence : public Error {
 public:
  NonConvergence(const std::string& what, double residual, int iterations)
      : Error(what), residual_(residual), iterations_(iterations) {}
  double residual() const { return residual_; }
  int iterations() const { return iterations_; }

 private:
  double residual_;
  int iterations_;
};

/// A tabulated model was queried outside its sample range.
class RangeError : public Error {
 public:
  using Error::Error;
};

/// Raised when samples fall outside a Young-measure value box.
class ClippedMassError : public Error {
 public:
  ClippedMassError(const std::string& what, double fraction)
      : Error(what), fraction_(fraction) {}
  double fraction() const { return fraction_; }

 private:
  double fraction_;
};

}  // namespace homog
