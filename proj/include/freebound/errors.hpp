#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace freebound {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A coefficient left its admissible range (non-positive volatility, negative rate, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Quadrature or root finding failed to reach the requested accuracy.
class NumericError : public Error {
 public:
  NumericError(const std::string& what, double error_estimate)
      : Error(what + " (error estimate " + std::to_string(error_estimate) + ")"),
        error_estimate_(error_estimate) {}
  double error_estimate() const noexcept { return error_estimate_; }

 private:
  double error_estimate_;
};

/// No closed-form transition density is registered for the diffusion family.
class UnsupportedFamily : public Error {
 public:
  using Error::Error;
};

/// Inconsistent piecewise description of a gain function.
class ConstructionError : public Error {
 public:
  using Error::Error;
};

/// Projected SOR did not converge at some time level.
class SolverError : public Error {
 public:
  SolverError(const std::string& what, std::size_t time_level, double worst_residual)
      : Error(what), time_level_(time_level), worst_residual_(worst_residual) {}
  std::size_t time_level() const noexcept { return time_level_; }
  double worst_residual() const noexcept { return worst_residual_; }

 private:
  std::size_t time_level_;
  double worst_residual_;
};

/// Solver output rejected because the exercise mask is not an up-set in time.
class DataQualityError : public Error {
 public:
  using Error::Error;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

class InversionError : public Error {
 public:
  using Error::Error;
};

/// Monte Carlo accumulators became non-finite.
class SimulationError : public Error {
 public:
  using Error::Error;
};

/// Configuration error anchored at a line of the input file (0 when not line specific).
class ValidationError : public Error {
 public:
  ValidationError(const std::string& what, int line = 0)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

}  // namespace freebound
