#pragma once

#include <stdexcept>
#include <string>

namespace cde {

// All library failures derive from cde::Error so callers (CLI, benchmark
// harness) can catch one type and map it to an exit code or an error column.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Vector/matrix dimensions do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Bad user configuration: unknown names, inconsistent sizes, out-of-range
// hyperparameters. Maps to CLI exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Argument outside the mathematical domain of a function.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Non-finite loss or gradient during optimization.
class TrainingDivergence : public Error {
 public:
  using Error::Error;
};

// Operation called on an object in the wrong lifecycle state.
class StateError : public Error {
 public:
  using Error::Error;
};

// Underflow, singular systems, degenerate densities.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Malformed input files.
class ParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace cde
