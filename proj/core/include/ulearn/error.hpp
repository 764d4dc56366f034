#pragma once

#include <stdexcept>
#include <string>

namespace ulearn {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes, layer dimensions or index out of range.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A NaN or Inf showed up in an activation, loss or parameter.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Invalid arguments or configuration values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace ulearn
