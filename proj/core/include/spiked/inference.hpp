#pragma once

// Plug-in estimation of (beta, R_uu, R_uv) from a computed critical point: the
// limiting alignment system read as equations in the signal parameters,
//   R_uu D_beta R_uv^{.(d-1)}   = R_uv M_hat
//   R_uv^T D_beta R_uv^{.(d-1)} = C_hat,
// with M_hat and C_hat built from the empirical (gamma, R_vv).

#include <optional>
#include <string>
#include <vector>

#include "spiked/alignments.hpp"
#include "spiked/critical.hpp"
#include "spiked/spectrum.hpp"

namespace spiked {

struct PluginMatrices {
  Matrix M_hat;
  Matrix C_hat;
  Matrix G_hat;
  Matrix W_hat;
  Vector kappas;
  // When r = s the system is solvable only if M C^{-1} is symmetric, which
  // finite-N statistics never satisfy exactly. M_sym = sym(M_hat C_hat^{-1}) C_hat
  // is the nearest consistent right-hand side; it equals M_hat at exact limits.
  Matrix M_sym;
  double asymmetry = 0.0;  // max |X - X^T| / max(1, max |X|), X = M_hat C_hat^{-1}
  SummaryStats source_stats;
  int d = 3;

  int s() const noexcept { return static_cast<int>(M_hat.rows()); }
};

// Throws UninformativeError when gamma_r/(d-1) lies inside the plug-in support.
PluginMatrices plugin_matrices(const SummaryStats& stats, int d);

struct PluginEstimate {
  Vector betas_hat;
  Matrix R_uu_hat;
  Matrix R_uv_hat;  // r x s
  double residual = 0.0;
  double objective = 0.0;  // beta^T R_uu^{.d} beta
  bool valid = false;

  double rho_hat() const { return R_uu_hat.rows() >= 2 ? R_uu_hat(0, 1) : 0.0; }
};

// Right-hand side actually used for r x s unknowns: M_sym when r = s, M_hat otherwise.
const Matrix& plugin_rhs(const PluginMatrices& pm, int r);

// Max-norm residual of the plug-in system at an estimate.
double plugin_residual(const PluginEstimate& est, const PluginMatrices& pm);

// Entries in [-1, 1] (+1e-8), |beta| ordered, R_uu and [[R_uu, R_uv], [R_uv^T, R_vv]] PSD.
bool is_valid_estimate(const PluginEstimate& est, const PluginMatrices& pm);

struct PluginOptions {
  int n_starts = 64;
  double tol = 1e-8;
  std::uint64_t seed = 0;
  int max_iter = 200;
  double dedup_tol = 1e-6;
  int threads = 1;
};

// Multistart damped least squares over (beta, strict upper R_uu, R_uv).
// Signs are canonical: rho_{1j} >= 0, and beta_1 > 0 (odd d) or R_uv(1,1) > 0 (even d).
std::vector<PluginEstimate> solve_plugin_general(const PluginMatrices& pm, int r, const PluginOptions& opts = {});

// Coefficients (constant term first) of
// (c11 X - c21)(c21 X^{d-1} - c22)^{d-1} + (c22 - c12 X)(c11 X^{d-1} - c12)^{d-1},
// trailing zero leading coefficients removed.
std::vector<double> rank2_polynomial(const Matrix& C, int d);

// Real roots of a polynomial (constant term first) via companion-matrix eigenvalues.
std::vector<double> real_roots(const std::vector<double>& coeffs, double imag_tol = 1e-8);

// Closed-form rank-2 candidates, one per admissible real root, each
// back-substituted (residual < 1e-8) before being returned. Throws
// SingularMatrixError for singular C_hat.
std::vector<PluginEstimate> solve_plugin_rank2(const PluginMatrices& pm);

// argmax beta^T R_uu^{.d} beta over valid estimates (ties: first in list).
std::optional<PluginEstimate> select_estimate(const std::vector<PluginEstimate>& estimates);

enum class EstimateStatus { Informative, Uninformative };

std::string to_string(EstimateStatus s);

struct EstimateOptions {
  CriticalOptions critical;
  std::optional<CriticalPoint> init;
  PluginOptions plugin;
  // Use the closed form when r = s = 2 (general solver otherwise).
  bool rank2_closed_form = true;
};

struct EstimateOutcome {
  EstimateStatus status = EstimateStatus::Uninformative;
  std::optional<PluginEstimate> estimate;
  std::vector<PluginEstimate> candidates;
  CriticalResult critical;  // raw, biased (gamma_hat, v_hat), kept as a diagnostic
  std::string reason;
};

// find_critical_points -> plugin_matrices -> solver -> selection.
// Throws NonconvergenceError if the critical point iteration does not converge.
EstimateOutcome estimate_from_tensor(const SymTensor& t, int r, const EstimateOptions& opts = {});

}  // namespace spiked
