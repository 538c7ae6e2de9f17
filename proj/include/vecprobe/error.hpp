#pragma once

#include <stdexcept>
#include <string>

namespace vecprobe {

// Root of the library's exception hierarchy. The CLI maps each subclass onto
// a distinct exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad user configuration (unknown key, invalid value, unresolvable path).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent input data.
class DataError : public Error {
 public:
  using Error::Error;
};

// Non-finite values, divergence, and other numeric failures.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Operand shapes do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

}  // namespace vecprobe
