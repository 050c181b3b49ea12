#pragma once

#include <stdexcept>
#include <string>

namespace ran {

// Error taxonomy shared across the library. The CLI maps these classes onto
// its exit codes, so new failure modes should reuse one of them.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor or matrix dimensions disagree.
struct ShapeError : Error {
  using Error::Error;
};

// A convolution geometry that cannot produce a valid output length.
struct GeometryError : Error {
  using Error::Error;
};

// A value outside the documented domain of an argument.
struct ArgumentError : Error {
  using Error::Error;
};

// API misuse: backward on a non-scalar, optimizer step without gradients.
struct UseError : Error {
  using Error::Error;
};

// Missing or unreadable file.
struct IoError : Error {
  using Error::Error;
};

// Unparseable, truncated, or version-incompatible file content.
struct FormatError : Error {
  using Error::Error;
};

// Non-finite values where finite ones are required (diverged training).
struct NumericError : Error {
  using Error::Error;
};

}  // namespace ran
