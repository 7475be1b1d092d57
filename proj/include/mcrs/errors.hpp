#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mcrs {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A parameter or argument lies outside its mathematical domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Matrix or array dimensions do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A correlation structure implied by the parameters is not positive definite.
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

/// A linear system that must be solved is singular.
class DegeneracyError : public Error {
 public:
  using Error::Error;
};

/// Too few observations, or no variation, to estimate something.
class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

/// An optimizer stopped before meeting its tolerance. Carries the best iterate.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, std::vector<double> best)
      : Error(what), best_(std::move(best)) {}
  const std::vector<double>& best_iterate() const noexcept { return best_; }

 private:
  std::vector<double> best_;
};

/// Malformed input files (non-numeric cells, ragged rows, bad model documents).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Invalid command-line usage.
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace mcrs
