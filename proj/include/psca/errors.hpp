#pragma once

#include <stdexcept>
#include <string>

namespace psca {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand dimensions do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A precondition on an argument value was violated (negative tolerance, r out of range, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A dense oracle was asked to materialize something above its size guard.
class OracleSizeError : public Error {
 public:
  using Error::Error;
};

/// Numerical breakdown: zero partial inner product, indefinite system, non-PSD input.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// A partial inner product annihilated the iterate.
class ZeroPipError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Malformed, truncated or corrupted file.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace psca
