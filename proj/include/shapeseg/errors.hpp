#pragma once

#include <stdexcept>
#include <string>

namespace shapeseg {

/// Base of every error thrown by the library. The CLI maps `InputError`
/// descendants to exit code 2 and everything else to exit code 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller supplied something invalid: bad arguments, malformed files, shape
/// mismatches, configuration violations.
class InputError : public Error {
 public:
  using Error::Error;
};

class FormatError : public InputError {
 public:
  using InputError::InputError;
};

class SizeError : public InputError {
 public:
  using InputError::InputError;
};

class ValidationError : public InputError {
 public:
  using InputError::InputError;
};

class IndexError : public InputError {
 public:
  using InputError::InputError;
};

class ShapeError : public InputError {
 public:
  using InputError::InputError;
};

class ArgumentError : public InputError {
 public:
  using InputError::InputError;
};

class ConfigError : public InputError {
 public:
  using InputError::InputError;
};

/// A set that must be nonempty was empty (no target label, no surface voxels).
class EmptinessError : public InputError {
 public:
  using InputError::InputError;
};

/// API misuse, e.g. a backward pass against a cache from different parameters.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values appeared during optimization.
class NumericError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace shapeseg
