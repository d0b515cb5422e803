#pragma once

#include <stdexcept>
#include <string>

namespace avloc {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Raised when a loss or its gradient evaluates to a non-finite value.
class GradientError : public Error {
 public:
  using Error::Error;
};

}  // namespace avloc
