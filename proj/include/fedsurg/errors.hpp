#pragma once

#include <stdexcept>
#include <string>

namespace fedsurg {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shapes of operands do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Caller-supplied value outside the operation's domain.
class InputError : public Error {
 public:
  using Error::Error;
};

// Malformed file contents (TDF magic, dtype, rank, truncated payload).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Internal precondition broken by the caller (programming error).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Experiment configuration is malformed or inconsistent.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A required input (dataset, run directory, metrics file) does not exist.
class MissingInputError : public Error {
 public:
  using Error::Error;
};

// Inputs exist but do not agree with each other (site or metric sets differ).
class MismatchError : public Error {
 public:
  using Error::Error;
};

}  // namespace fedsurg
