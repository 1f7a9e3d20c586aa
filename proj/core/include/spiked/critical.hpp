#pragma once

// Critical points of the symmetric rank-r approximation problem
//   min || T - sum_i gamma_i v_i^{(x)d} ||  subject to ||v_i|| = 1,
// the flattened matrix whose eigenvector encodes them, and the fixed-point
// iteration that finds them.

#include <cstdint>
#include <optional>
#include <vector>

#include "spiked/tensor.hpp"

namespace spiked {

struct CriticalPoint {
  Vector gammas;  // length r, |gamma_1| >= ... >= |gamma_r|
  Matrix vs;      // N x r, unit columns

  int rank() const noexcept { return static_cast<int>(gammas.size()); }
  int dim() const noexcept { return static_cast<int>(vs.rows()); }

  // Stable sort of (gamma_i, v_i) by |gamma| descending.
  void sort_by_weight();

  // (gamma_1 v_1, ..., gamma_r v_r) stacked into one vector of length rN.
  Vector stacked() const;
};

struct SummaryStats {
  Matrix R_vv;  // s x s
  Matrix R_uv;  // r x s, entry (i, j) = <u_i, v_j>
  Matrix R_uu;  // r x r
  Vector gammas;
};

// Gram matrix of the columns.
Matrix gram(const Matrix& vectors);
// Entrywise k-th power.
Matrix hadamard_power(const Matrix& m, int k);

// W = (R_vv^{.(d-1)})^{-1} diag(gamma_r/gamma_1, ..., gamma_r/gamma_r).
// Throws SingularMatrixError (with the smallest eigenvalue) or InvalidArgument for a zero gamma.
Matrix weight_matrix(const Matrix& R_vv, const Vector& gammas, int d);

// (W kron Id) blockdiag(T(v_1^{d-2}), ..., T(v_r^{d-2})), rN x rN.
Matrix flatten(const SymTensor& t, const CriticalPoint& cp);

// Symmetric matrix similar to flatten(t, cp):
// (H^{-1/2} kron Id) blockdiag((gamma_r/gamma_i) T(v_i^{d-2})) (H^{-1/2} kron Id), H = R_vv^{.(d-1)}.
Matrix symmetrized_flatten(const SymTensor& t, const CriticalPoint& cp);

// max_i || T(v_i^{d-1}) - sum_j gamma_j <v_i, v_j>^{d-1} v_j || + | ||v_i|| - 1 |
double kkt_residual(const SymTensor& t, const CriticalPoint& cp);

struct CriticalOptions {
  double tol = 1e-8;
  int max_iter = 1000;
  int max_restarts = 5;
  int max_perturbations = 20;
  // Smallest admissible eigenvalue of R_vv^{.(d-1)} before a vector is perturbed.
  double collinearity_floor = 1e-8;
  std::uint64_t seed = 0;
};

struct CriticalReport {
  bool converged = false;
  int iterations = 0;
  int restarts = 0;
  int perturbations = 0;
  double residual = 0.0;
  std::vector<double> trace;  // KKT residual after every iteration
};

struct CriticalResult {
  CriticalPoint point;
  CriticalReport report;
};

// Random start: unit vectors with identity Gram (orthonormal) and all gammas 1.
CriticalPoint random_start(int dim, int r, std::uint64_t seed);

// One application of flatten(T)/gamma_r to the stacked vector followed by
// renormalisation and re-sorting. Applied blockwise without materialising the
// rN x rN matrix: block j becomes sum_i (H^{-1})_{ji} T(v_i^{d-1}).
CriticalPoint iterate_once(const SymTensor& t, const CriticalPoint& cp);

// Runs the iteration from `init` (or a seeded random start) until
// kkt_residual <= tol. Does not throw on non-convergence; check report.converged.
// Throws SingularMatrixError when restarts are exhausted.
CriticalResult find_critical_points(const SymTensor& t, int r, const std::optional<CriticalPoint>& init,
                                    const CriticalOptions& opts = {});

SummaryStats summary_statistics(const CriticalPoint& cp, const SpikeModel& model);

}  // namespace spiked
