#pragma once

// Small dense nonlinear least squares (Levenberg-Marquardt with a central
// finite-difference Jacobian) and Halton low-discrepancy points for multistart.

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "spiked/tensor.hpp"

namespace spiked {

// Residual vector, or nullopt where the model cannot be evaluated (treated as +inf).
using ResidualFn = std::function<std::optional<Vector>(const Vector&)>;

struct LmOptions {
  int max_iter = 200;
  double target = 1e-14;     // stop once max |f| falls below this
  double step_tol = 1e-15;   // relative step size below which progress has stalled
  double fd_step = 1e-6;     // relative finite-difference step
  double lambda0 = 1e-3;
};

struct LmResult {
  Vector x;
  Vector f;
  double max_abs = 0.0;
  int iterations = 0;
  bool feasible = false;
};

LmResult levenberg_marquardt(const ResidualFn& fn, const Vector& x0, const LmOptions& opts = {});

// k-th point (k >= 1) of the radical-inverse sequence in the given prime base.
double radical_inverse(std::uint64_t k, int base);

// n points of the Halton sequence in [lo, hi], each coordinate shifted by a
// seed-derived rotation modulo 1 so that different seeds give different, still
// low-discrepancy, designs. seed 0 gives the plain sequence.
std::vector<Vector> halton_points(int n, const Vector& lo, const Vector& hi, std::uint64_t seed);

}  // namespace spiked
