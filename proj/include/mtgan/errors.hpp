#pragma once

#include <stdexcept>
#include <string>

namespace mtgan {

// Base of every error the library throws. The CLI maps subclasses onto
// process exit codes (2 config/usage, 3 numeric, 4 corrupt artifact).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf observed in a loss, gradient or parameter.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Bad grammar, configuration or arguments.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Checksum, magic or version mismatch in a persisted artifact.
class CorruptArtifactError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

}  // namespace mtgan
