#pragma once

#include <stdexcept>
#include <string>

namespace cgan {

// Base of every error the engine raises. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor extents that do not line up (matmul, concat, conv channels ...).
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A precondition of an operation was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class LabelError : public Error {
 public:
  using Error::Error;
};

// Malformed CSV row, with the 1-based row number in the message.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Bad magic, truncated payload or unknown version in a binary file.
class FormatError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Non-finite loss or a finite-difference oracle that produced NaN/Inf.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Confidence filter accepted nothing within its draw budget.
class ExhaustionError : public Error {
 public:
  using Error::Error;
};

}  // namespace cgan
