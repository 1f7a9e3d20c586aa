#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace spiked {

// Base class for every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shapes or lengths that do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A tensor whose canonical storage cannot be allocated.
class StorageError : public Error {
 public:
  StorageError(const std::string& what, std::size_t required_bytes)
      : Error(what), required_bytes_(required_bytes) {}
  std::size_t required_bytes() const noexcept { return required_bytes_; }

 private:
  std::size_t required_bytes_;
};

// A matrix that had to be invertible (or definite) was not.
class SingularMatrixError : public Error {
 public:
  SingularMatrixError(const std::string& what, double smallest_eigenvalue)
      : Error(what), smallest_eigenvalue_(smallest_eigenvalue) {}
  double smallest_eigenvalue() const noexcept { return smallest_eigenvalue_; }

 private:
  double smallest_eigenvalue_;
};

// Target Gram matrix that is not positive definite. `minor_order` is the size
// of the first leading principal minor that is not positive.
class NotPositiveDefiniteError : public Error {
 public:
  NotPositiveDefiniteError(const std::string& what, int minor_order, double minor_value)
      : Error(what), minor_order_(minor_order), minor_value_(minor_value) {}
  int minor_order() const noexcept { return minor_order_; }
  double minor_value() const noexcept { return minor_value_; }

 private:
  int minor_order_;
  double minor_value_;
};

// Inputs outside the hypotheses of the limiting-spectrum results, e.g. a real
// evaluation point strictly inside the spectral support.
class HypothesisViolation : public Error {
 public:
  using Error::Error;
};

// A critical point whose smallest weight lies inside the noise spectrum: the
// plug-in correction cannot be evaluated.
class UninformativeError : public HypothesisViolation {
 public:
  using HypothesisViolation::HypothesisViolation;
};

// Iterative solver gave up.
class NonconvergenceError : public Error {
 public:
  NonconvergenceError(const std::string& what, double last_residual)
      : Error(what), last_residual_(last_residual) {}
  double last_residual() const noexcept { return last_residual_; }

 private:
  double last_residual_;
};

// Bisection bracket that does not straddle the transition.
class BracketError : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

}  // namespace spiked
