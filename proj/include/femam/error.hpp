#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace femam {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad user input: config values, experiment files, missing paths. CLI exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A runtime invariant monitor tripped. CLI exit code 1.
class InvariantError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  DimensionError(std::size_t level, std::size_t expected, std::size_t actual)
      : Error("parameter dimension mismatch at level " + std::to_string(level) + ": expected " +
              std::to_string(expected) + ", got " + std::to_string(actual)),
        level_(level) {}

  std::size_t level() const { return level_; }

 private:
  std::size_t level_;
};

}  // namespace femam
