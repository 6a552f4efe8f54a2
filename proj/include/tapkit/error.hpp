#pragma once

#include <stdexcept>
#include <string>

namespace tapkit {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data (files, dimensions, parameter values).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Syntax error in an input file; carries the 1-based line number.
class ParseError : public DataError {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : DataError(file + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// A link parameter (free-flow time, capacity) that must be positive is not.
class NonPositiveParameterError : public DataError {
 public:
  using DataError::DataError;
};

/// The road graph is not strongly connected.
class DisconnectedNetworkError : public DataError {
 public:
  using DataError::DataError;
};

/// A numerical procedure could not produce a usable answer
/// (infeasible or unbounded QP, unreachable destination, ...).
class SolverError : public Error {
 public:
  using Error::Error;
};

}  // namespace tapkit
