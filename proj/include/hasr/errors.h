#pragma once

#include <stdexcept>
#include <string>

namespace hasr {

// Base for errors caused by bad input (files, configs, arguments). The CLI maps
// these to exit code 1; anything else is treated as an internal failure.
class UserError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes do not agree.
class DimensionError : public UserError {
 public:
  using UserError::UserError;
};

// A documented precondition of an operation was violated.
class ContractError : public UserError {
 public:
  using UserError::UserError;
};

class ConfigError : public UserError {
 public:
  using UserError::UserError;
};

class ParseError : public UserError {
 public:
  using UserError::UserError;
};

// Raised when a target is too long for CTC to align against the input frames.
class UnalignableError : public UserError {
 public:
  using UserError::UserError;
};

// NaN or infinity showed up where a finite value was required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace hasr
