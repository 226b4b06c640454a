#pragma once

#include <stdexcept>
#include <string>

namespace safemtrl {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A shape or rank request is incompatible with the operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A factorization met a (numerically) rank-deficient input.
class DegeneracyError : public Error {
 public:
  DegeneracyError(const std::string& what, double singular_value)
      : Error(what), singular_value_(singular_value) {}

  double singular_value() const noexcept { return singular_value_; }

 private:
  double singular_value_;
};

/// An input violated a documented precondition (e.g. non-orthonormal basis).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

class ScheduleError : public Error {
 public:
  using Error::Error;
};

/// Invalid or infeasible run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Spectral initialization saw no usable signal.
class InitError : public Error {
 public:
  using Error::Error;
};

class StepSizeError : public Error {
 public:
  using Error::Error;
};

/// Stored optimum is below a played action's value: the round data is inconsistent.
class EnvironmentInconsistency : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class BoundsError : public Error {
 public:
  using Error::Error;
};

class PipelineError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace safemtrl
