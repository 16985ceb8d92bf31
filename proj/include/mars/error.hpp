#pragma once

#include <stdexcept>
#include <string>

namespace mars {

// Base for every error raised by the library. Callers that only care about
// "something went wrong" catch this; the CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration or parameters (exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A precondition of an operation was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Input text could not be turned into a workload.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class BoundsError : public Error {
 public:
  using Error::Error;
};

// Dependency cycle in a workflow description.
class CycleError : public Error {
 public:
  using Error::Error;
};

// Simulation cannot make progress (a pending job can never start).
class DeadlockError : public Error {
 public:
  using Error::Error;
};

// Non-finite values during training (exit code 3).
class DivergenceError : public Error {
 public:
  using Error::Error;
};

// File could not be read or written (exit code 4).
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace mars
