#pragma once

#include <stdexcept>
#include <string>

namespace advsim {

// Malformed input file or message.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Well-formed input that breaks a data invariant. The message starts with the
// name of the offending field.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad arguments to an operation (out-of-range step, dimension mismatch, ...).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// External planner broke wire protocol v1.
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class PlannerTimeout : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace advsim
