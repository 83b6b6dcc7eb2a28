#pragma once

#include <stdexcept>
#include <string>

namespace gvgap {

/// Base for every error raised by the testbed.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A documented precondition of an operation was not met by the caller.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Model output or an input file could not be parsed.
class ParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace gvgap
