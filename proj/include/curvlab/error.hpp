#pragma once

#include <stdexcept>
#include <string>

namespace curvlab {

// Base class for all failures raised by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Incompatible tensor shapes; message names the operation and both shapes.
struct ShapeError : Error {
  using Error::Error;
};

// NaN/Inf produced by a numeric operation. Non-finite values are never
// propagated silently; the message locates the offending primitive.
struct NonFiniteError : Error {
  using Error::Error;
};

// Checkpoint / dataset file problems (bad magic, version, truncation, ...).
struct IoError : Error {
  using Error::Error;
};

// Iterative solver exceeded its iteration budget.
struct ConvergenceError : Error {
  ConvergenceError(const std::string& msg, int iterations)
      : Error(msg), iterations(iterations) {}
  int iterations = 0;
};

// Constraint set of a quadratic model is empty.
struct InfeasibleError : Error {
  using Error::Error;
};

}  // namespace curvlab
