#pragma once

#include <stdexcept>
#include <string>

namespace probprec {

/// Invalid arguments or violated preconditions (dimension mismatch, bad counts).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical routine could not produce a result: non-SPD pencil, singular
/// capacitance matrix, negative curvature along a probe, and the like.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Cholesky factorization hit a non-positive pivot.
class NotPositiveDefinite : public NumericalError {
 public:
  NotPositiveDefinite(const std::string& what, long pivot)
      : NumericalError(what), pivot_(pivot) {}
  long pivot() const noexcept { return pivot_; }

 private:
  long pivot_;
};

/// A small dense system is singular to working precision.
class SingularMatrix : public NumericalError {
 public:
  SingularMatrix(const std::string& what, double condition_estimate)
      : NumericalError(what), condition_estimate_(condition_estimate) {}
  double condition_estimate() const noexcept { return condition_estimate_; }

 private:
  double condition_estimate_;
};

/// Probe matrix columns are linearly dependent.
class RankDeficient : public NumericalError {
 public:
  RankDeficient(const std::string& what, long column)
      : NumericalError(what), column_(column) {}
  long column() const noexcept { return column_; }

 private:
  long column_;
};

/// Problem / experiment configuration could not be interpreted.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace probprec
