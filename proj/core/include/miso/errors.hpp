#pragma once

#include <stdexcept>
#include <string>

namespace miso {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes (beyond trailing-aligned broadcast rules).
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// NaN or Inf appeared in a forward result, or an op was fed a value
/// outside its domain (log/sqrt of non-positive input, division by zero).
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

/// backward() on a tensor whose tape was cleared, or on a non-scalar.
class GraphError : public Error {
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

}  // namespace miso
