#pragma once

// Limiting alignment system between s converging critical-point components and
// r true signals:
//   R_uu D_beta R_uv^{.(d-1)}   = R_uv M
//   R_uv^T D_beta R_uv^{.(d-1)} = R_vv M + (1/(d(d-1))) (R_vv^{.(d-1)} G W)^T
//   M = D_gamma R_vv^{.(d-1)} + (1/d) R_vv^{.(d-2)} o (G W),  G = G_s(gamma_s/(d-1)).

#include <cstdint>
#include <vector>

#include "spiked/spectrum.hpp"
#include "spiked/tensor.hpp"

namespace spiked {

struct AlignmentSolution {
  Vector gammas;  // length s
  Matrix R_uv;    // r x s
  Matrix R_vv;    // s x s, unit diagonal
  double residual = 0.0;
  bool valid = false;
  Vector kappas;  // spectrum used to evaluate G

  int s() const noexcept { return static_cast<int>(gammas.size()); }
  int r() const noexcept { return static_cast<int>(R_uv.rows()); }
};

// Every (gamma, R_vv)-dependent quantity of the system.
struct LimitTerms {
  Matrix H;  // R_vv^{.(d-1)}
  Matrix W;
  SpectralLimit lim;
  Matrix G;  // real edge-branch Stieltjes matrix at gamma_s/(d-1)
  Matrix M;
  Matrix C;  // R_vv M + (1/(d(d-1))) (H G W)^T
};

// Throws HypothesisViolation when gamma_s/(d-1) lies inside the support, or
// SingularMatrixError for a singular Hadamard power.
LimitTerms limit_terms(const Vector& gammas, const Matrix& R_vv, int d);

// (d-1)|kappa_1| for the given (gamma, R_vv): the smallest admissible |gamma_s|.
double gamma_bound(const Vector& gammas, const Matrix& R_vv, int d);

// Residual matrices of the two equations (r x s and s x s).
struct AlignmentEquations {
  Matrix E1;
  Matrix E2;
};
AlignmentEquations alignment_equations(const Vector& gammas, const Matrix& R_uv, const Matrix& R_vv,
                                       const Vector& betas, const Matrix& R_uu, int d);

// Max-norm of both residual matrices. Throws HypothesisViolation outside the evaluable region.
double alignment_residual(const AlignmentSolution& candidate, const Vector& betas, const Matrix& R_uu, int d);

struct AlignmentOptions {
  int n_starts = 64;
  double tol = 1e-8;
  std::uint64_t seed = 0;
  int max_iter = 200;
  double dedup_tol = 1e-6;
  int threads = 1;
};

// All distinct roots (max-norm distance > dedup_tol) with residual < tol
// found from the multistart design. Valid roots come first.
std::vector<AlignmentSolution> solve_alignment_system(const Vector& betas, const Matrix& R_uu, int d, int s,
                                                      const AlignmentOptions& opts = {});

// Validity of a root: residual < tol, |gamma_s| > (d-1)|kappa_1|, ordered
// |gamma|, entries of R_uv and R_vv in [-1, 1] (+1e-8), a positive
// semidefinite joint Gram matrix [[R_uu, R_uv], [R_uv^T, R_vv]], and for odd d
// gamma > 0 (odd-d critical points can always be sign-flipped to positive weights).
bool is_valid_solution(const AlignmentSolution& sol, const Matrix& R_uu, int d, double tol);

// beta^T R_uu^{.d} beta - gamma^T R_vv^{.d} gamma
double asymptotic_squared_error(const Vector& betas, const Matrix& R_uu, const Vector& gammas,
                                const Matrix& R_vv, int d);

// Valid solution with the smallest squared error (ties: larger |gamma_s|).
// Throws InvalidArgument when no valid solution is given.
AlignmentSolution select_solution(const std::vector<AlignmentSolution>& solutions, const Vector& betas,
                                  const Matrix& R_uu, int d);

bool has_valid_solution(const Vector& betas, const Matrix& R_uu, int d, int s, const AlignmentOptions& opts);

struct ThresholdResult {
  double value = 0.0;
  double lower = 0.0;  // largest scale seen without valid solutions
  double upper = 0.0;  // smallest scale seen with valid solutions
  int evaluations = 0;
};

// Bisection on c for the existence of valid solutions at betas = c * direction.
// Throws BracketError unless solutions exist at bracket_hi and not at bracket_lo.
ThresholdResult detection_threshold(const Matrix& R_uu, int d, int s, const Vector& direction, double bracket_lo,
                                    double bracket_hi, double tol, const AlignmentOptions& opts = {});

}  // namespace spiked
