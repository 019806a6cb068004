#pragma once

#include <stdexcept>

namespace oflow {

// Base class for everything thrown by the library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeError : Error { using Error::Error; };    // incompatible tensor/layer shapes
struct SizeError : Error { using Error::Error; };     // element count overflow or negative dims
struct DomainError : Error { using Error::Error; };   // empty reductions, fully masked losses
struct FormatError : Error { using Error::Error; };   // malformed file contents
struct IoError : Error { using Error::Error; };       // filesystem failures
struct InputError : Error { using Error::Error; };    // invalid user-facing arguments
struct NumericError : Error { using Error::Error; };  // non-finite values during optimization
struct StateError : Error { using Error::Error; };    // cache/network mismatch

}  // namespace oflow
