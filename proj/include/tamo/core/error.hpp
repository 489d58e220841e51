#pragma once

#include <stdexcept>
#include <string>

namespace tamo {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible shapes or lengths.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

/// Requested sizes cannot be satisfied (pool too small, batch too large).
class SizeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or corrupted file / record contents.
class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// A sampled task is unusable (constant output column, failed factorization).
class DegenerateTaskError : public Error {
 public:
  using Error::Error;
};

}  // namespace tamo
