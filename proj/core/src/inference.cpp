#include "spiked/inference.hpp"

#include <algorithm>
#include <cmath>
#include <complex>

#include "spiked/errors.hpp"
#include "spiked/least_squares.hpp"
#include "spiked/parallel.hpp"

namespace spiked {

namespace {

double binomial(int n, int k) {
  double out = 1.0;
  for (int i = 1; i <= k; ++i) out = out * (n - k + i) / i;
  return out;
}

// Coefficients of (a X^p + b)^p, constant term first.
std::vector<double> binomial_power(double a, double b, int p) {
  std::vector<double> out(static_cast<std::size_t>(p * p + 1), 0.0);
  for (int k = 0; k <= p; ++k) {
    out[static_cast<std::size_t>(k * p)] = binomial(p, k) * std::pow(a, k) * std::pow(b, p - k);
  }
  return out;
}

std::vector<double> times_linear(const std::vector<double>& q, double c0, double c1) {
  std::vector<double> out(q.size() + 1, 0.0);
  for (std::size_t i = 0; i < q.size(); ++i) {
    out[i] += c0 * q[i];
    out[i + 1] += c1 * q[i];
  }
  return out;
}

double horner(const std::vector<double>& c, double x) {
  double v = 0.0;
  for (auto it = c.rbegin(); it != c.rend(); ++it) v = v * x + *it;
  return v;
}

double horner_derivative(const std::vector<double>& c, double x) {
  double v = 0.0;
  for (std::size_t i = c.size(); i-- > 1;) v = v * x + static_cast<double>(i) * c[i];
  return v;
}

// Real d-th root preserving sign (odd d).
double signed_root(double x, int d) { return std::copysign(std::pow(std::abs(x), 1.0 / d), x); }

struct Layout {
  int r;
  int s;
  int n_uu() const { return r * (r - 1) / 2; }
  int size() const { return r + n_uu() + r * s; }
};

void unpack(const Layout& l, const Vector& x, PluginEstimate& e) {
  e.betas_hat = x.head(l.r);
  e.R_uu_hat = Matrix::Identity(l.r, l.r);
  Eigen::Index k = l.r;
  for (int j = 1; j < l.r; ++j)
    for (int i = 0; i < j; ++i) e.R_uu_hat(i, j) = e.R_uu_hat(j, i) = x[k++];
  e.R_uv_hat = Eigen::Map<const Matrix>(x.data() + k, l.r, l.s);
}

Vector pack(const Layout& l, const PluginEstimate& e) {
  Vector x(l.size());
  x.head(l.r) = e.betas_hat;
  Eigen::Index k = l.r;
  for (int j = 1; j < l.r; ++j)
    for (int i = 0; i < j; ++i) x[k++] = e.R_uu_hat(i, j);
  Eigen::Map<Matrix>(x.data() + k, l.r, l.s) = e.R_uv_hat;
  return x;
}

struct PluginEquations {
  Matrix E1;
  Matrix E2;
};

PluginEquations plugin_equations(const Vector& betas, const Matrix& R_uu, const Matrix& R_uv, const Matrix& M,
                                 const Matrix& C, int d) {
  const Matrix signal = betas.asDiagonal() * hadamard_power(R_uv, d - 1);
  return {R_uu * signal - R_uv * M, R_uv.transpose() * signal - C};
}

// u_j -> -u_j flips row j of R_uv, row/column j of R_uu, and for odd d beta_j.
void flip_signal(PluginEstimate& e, Eigen::Index j, int d) {
  if (d % 2 == 1) e.betas_hat[j] = -e.betas_hat[j];
  e.R_uv_hat.row(j) *= -1.0;
  for (Eigen::Index i = 0; i < e.R_uu_hat.rows(); ++i) {
    if (i == j) continue;
    e.R_uu_hat(i, j) = -e.R_uu_hat(i, j);
    e.R_uu_hat(j, i) = -e.R_uu_hat(j, i);
  }
}

void canonicalize(PluginEstimate& e, int d) {
  const Eigen::Index r = e.betas_hat.size();
  if (r == 0) return;
  const bool flip_first = (d % 2 == 1) ? e.betas_hat[0] < 0.0 : e.R_uv_hat(0, 0) < 0.0;
  if (flip_first) flip_signal(e, 0, d);
  for (Eigen::Index j = 1; j < r; ++j) {
    const double rho = e.R_uu_hat(0, j);
    bool flip = rho < 0.0;
    if (rho == 0.0 && e.R_uv_hat.cols() > 0) {
      Eigen::Index piv = 0;
      e.R_uv_hat.row(j).cwiseAbs().maxCoeff(&piv);
      flip = e.R_uv_hat(j, piv) < 0.0;
    }
    if (flip) flip_signal(e, j, d);
  }
}

void finish(PluginEstimate& e, const PluginMatrices& pm) {
  e.residual = plugin_residual(e, pm);
  e.objective = e.betas_hat.dot(hadamard_power(e.R_uu_hat, pm.d) * e.betas_hat);
  e.valid = is_valid_estimate(e, pm);
}

}  // namespace

PluginMatrices plugin_matrices(const SummaryStats& stats, int d) {
  const Eigen::Index s = stats.gammas.size();
  if (s < 1) throw InvalidArgument("summary statistics carry no weights");
  if (stats.R_vv.rows() != s || stats.R_vv.cols() != s) throw DimensionError("R_vv must be s x s");
  PluginMatrices pm;
  pm.d = d;
  pm.source_stats = stats;
  const Matrix h = hadamard_power(stats.R_vv, d - 1);
  pm.W_hat = weight_matrix(stats.R_vv, stats.gammas, d);
  const SpectralLimit lim = kappa_spectrum(pm.W_hat, d);
  pm.kappas = lim.kappas;
  const double z = stats.gammas[s - 1] / (d - 1);
  if (!(std::abs(z) >= lim.radius())) {
    throw UninformativeError("uninformative critical point: gamma_r/(d-1) = " + std::to_string(z) +
                             " lies inside the noise support [-" + std::to_string(lim.radius()) + ", " +
                             std::to_string(lim.radius()) + "]");
  }
  pm.G_hat = stieltjes_matrix_real(z, lim);
  const Matrix gw = pm.G_hat * pm.W_hat;
  pm.M_hat = stats.gammas.asDiagonal() * h + (1.0 / d) * hadamard_power(stats.R_vv, d - 2).cwiseProduct(gw);
  pm.C_hat = stats.R_vv * pm.M_hat + (1.0 / (static_cast<double>(d) * (d - 1))) * (h * gw).transpose();
  if (!pm.M_hat.allFinite() || !pm.C_hat.allFinite()) throw HypothesisViolation("non-finite plug-in matrices");
  Eigen::FullPivLU<Matrix> lu(pm.C_hat);
  if (lu.isInvertible()) {
    const Matrix x = pm.M_hat * lu.inverse();
    const Matrix xs = 0.5 * (x + x.transpose());
    pm.M_sym = xs * pm.C_hat;
    pm.asymmetry = (x - x.transpose()).cwiseAbs().maxCoeff() / std::max(1.0, x.cwiseAbs().maxCoeff());
  } else {
    pm.M_sym = pm.M_hat;
    pm.asymmetry = 0.0;
  }
  return pm;
}

const Matrix& plugin_rhs(const PluginMatrices& pm, int r) { return r == pm.s() ? pm.M_sym : pm.M_hat; }

double plugin_residual(const PluginEstimate& est, const PluginMatrices& pm) {
  const Eigen::Index r = est.betas_hat.size();
  if (est.R_uu_hat.rows() != r || est.R_uu_hat.cols() != r) throw DimensionError("R_uu_hat must be r x r");
  if (est.R_uv_hat.rows() != r || est.R_uv_hat.cols() != pm.s()) throw DimensionError("R_uv_hat must be r x s");
  const auto e = plugin_equations(est.betas_hat, est.R_uu_hat, est.R_uv_hat, plugin_rhs(pm, static_cast<int>(r)),
                                  pm.C_hat, pm.d);
  return std::max(e.E1.cwiseAbs().maxCoeff(), e.E2.cwiseAbs().maxCoeff());
}

bool is_valid_estimate(const PluginEstimate& est, const PluginMatrices& pm) {
  constexpr double slack = 1e-8;
  const Eigen::Index r = est.betas_hat.size();
  const Eigen::Index s = pm.s();
  if (!est.betas_hat.allFinite() || !est.R_uu_hat.allFinite() || !est.R_uv_hat.allFinite()) return false;
  for (Eigen::Index i = 1; i < r; ++i) {
    if (std::abs(est.betas_hat[i]) > std::abs(est.betas_hat[i - 1]) * (1 + 1e-12)) return false;
  }
  if (est.R_uu_hat.cwiseAbs().maxCoeff() > 1 + slack) return false;
  if (est.R_uv_hat.cwiseAbs().maxCoeff() > 1 + slack) return false;
  Matrix joint(r + s, r + s);
  joint << est.R_uu_hat, est.R_uv_hat, est.R_uv_hat.transpose(), pm.source_stats.R_vv;
  Eigen::SelfAdjointEigenSolver<Matrix> es(joint, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0) >= -slack;
}

std::vector<PluginEstimate> solve_plugin_general(const PluginMatrices& pm, int r, const PluginOptions& opts) {
  if (r < 1) throw InvalidArgument("rank must be at least 1");
  if (opts.n_starts < 1) throw InvalidArgument("n_starts must be positive");
  const Layout layout{r, pm.s()};
  const int n = layout.size();
  const Matrix& M = plugin_rhs(pm, r);
  const int d = pm.d;

  const double g_max = pm.source_stats.gammas.cwiseAbs().maxCoeff();
  Vector lo(n), hi(n);
  lo.head(r).setConstant(-2 * g_max);
  hi.head(r).setConstant(2 * g_max);
  lo[0] = 0.0;
  lo.segment(r, layout.n_uu()).setConstant(-0.9);
  hi.segment(r, layout.n_uu()).setConstant(0.9);
  lo.tail(r * layout.s).setConstant(-1.0);
  hi.tail(r * layout.s).setConstant(1.0);
  const auto starts = halton_points(opts.n_starts, lo, hi, opts.seed);

  const ResidualFn fn = [&](const Vector& x) -> std::optional<Vector> {
    PluginEstimate e;
    unpack(layout, x, e);
    const auto eq = plugin_equations(e.betas_hat, e.R_uu_hat, e.R_uv_hat, M, pm.C_hat, d);
    Vector f(eq.E1.size() + eq.E2.size());
    f << Eigen::Map<const Vector>(eq.E1.data(), eq.E1.size()), Eigen::Map<const Vector>(eq.E2.data(), eq.E2.size());
    return f;
  };

  LmOptions lm;
  lm.max_iter = opts.max_iter;
  std::vector<std::optional<PluginEstimate>> found(starts.size());
  parallel_for(starts.size(), opts.threads, [&](std::size_t k) {
    const LmResult res = levenberg_marquardt(fn, starts[k], lm);
    if (!res.feasible) return;
    PluginEstimate e;
    unpack(layout, res.x, e);
    canonicalize(e, d);
    finish(e, pm);
    if (!(e.residual < opts.tol)) return;
    found[k] = std::move(e);
  });

  std::vector<PluginEstimate> out;
  std::vector<Vector> keys;
  for (auto& f : found) {
    if (!f) continue;
    const Vector key = pack(layout, *f);
    const bool dup = std::any_of(keys.begin(), keys.end(), [&](const Vector& other) {
      return (other - key).cwiseAbs().maxCoeff() <= opts.dedup_tol;
    });
    if (dup) continue;
    keys.push_back(key);
    out.push_back(std::move(*f));
  }
  std::stable_sort(out.begin(), out.end(), [](const PluginEstimate& a, const PluginEstimate& b) {
    if (a.valid != b.valid) return a.valid;
    return a.objective > b.objective;
  });
  return out;
}

std::vector<double> rank2_polynomial(const Matrix& C, int d) {
  if (C.rows() != 2 || C.cols() != 2) throw DimensionError("rank-2 polynomial needs a 2 x 2 matrix");
  const double c11 = C(0, 0), c12 = C(0, 1), c21 = C(1, 0), c22 = C(1, 1);
  const int p = d - 1;
  const auto a = times_linear(binomial_power(c21, -c22, p), -c21, c11);
  const auto b = times_linear(binomial_power(c11, -c12, p), c22, -c12);
  std::vector<double> out(std::max(a.size(), b.size()), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) out[i] += a[i];
  for (std::size_t i = 0; i < b.size(); ++i) out[i] += b[i];
  double scale = 0.0;
  for (double c : out) scale = std::max(scale, std::abs(c));
  while (!out.empty() && std::abs(out.back()) <= 1e-14 * scale) out.pop_back();
  return out;
}

std::vector<double> real_roots(const std::vector<double>& coeffs, double imag_tol) {
  std::vector<double> c = coeffs;
  while (!c.empty() && c.back() == 0.0) c.pop_back();
  if (c.size() < 2) return {};
  std::vector<double> roots;
  // Zero roots are factored out exactly.
  std::size_t zeros = 0;
  while (zeros < c.size() && c[zeros] == 0.0) ++zeros;
  if (zeros > 0) {
    roots.push_back(0.0);
    c.erase(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(zeros));
  }
  const Eigen::Index n = static_cast<Eigen::Index>(c.size()) - 1;
  if (n >= 1) {
    Matrix comp = Matrix::Zero(n, n);
    for (Eigen::Index i = 1; i < n; ++i) comp(i, i - 1) = 1.0;
    for (Eigen::Index i = 0; i < n; ++i) comp(i, n - 1) = -c[static_cast<std::size_t>(i)] / c.back();
    Eigen::EigenSolver<Matrix> es(comp, false);
    for (Eigen::Index i = 0; i < n; ++i) {
      const std::complex<double> z = es.eigenvalues()[i];
      if (std::abs(z.imag()) >= imag_tol * (1.0 + std::abs(z))) continue;
      double x = z.real();
      // Newton polishing on the original coefficients, kept only while it helps.
      for (int it = 0; it < 5; ++it) {
        const double f = horner(c, x);
        const double df = horner_derivative(c, x);
        if (df == 0.0) break;
        const double xn = x - f / df;
        if (!(std::abs(horner(c, xn)) < std::abs(f))) break;
        x = xn;
      }
      roots.push_back(x);
    }
  }
  std::sort(roots.begin(), roots.end());
  return roots;
}

std::vector<PluginEstimate> solve_plugin_rank2(const PluginMatrices& pm) {
  if (pm.s() != 2) throw DimensionError("closed form needs s = 2");
  const int d = pm.d;
  const Matrix& C = pm.C_hat;
  Eigen::FullPivLU<Matrix> lu(C);
  if (!lu.isInvertible()) {
    throw SingularMatrixError("C_hat is singular", lu.matrixLU().diagonal().cwiseAbs().minCoeff());
  }
  const Matrix ci = lu.inverse();
  const Matrix x = pm.M_sym * ci;
  const Matrix xs = 0.5 * (x + x.transpose());
  const double c11 = C(0, 0), c12 = C(0, 1), c21 = C(1, 0), c22 = C(1, 1);

  std::vector<PluginEstimate> out;
  std::vector<Vector> keys;
  const Layout layout{2, 2};
  for (const double eta : real_roots(rank2_polynomial(C, d))) {
    const double eta_p = std::pow(eta, d - 1);
    const double denom = c21 * eta_p - c22;
    if (std::abs(denom) <= 1e-10) continue;
    const double theta = (c11 * eta_p - c12) / denom;
    const double theta_p = std::pow(theta, d - 1);
    const double b1 = (Eigen::RowVector2d(1.0, eta_p) * ci * Eigen::Vector2d(1.0, eta))(0);
    const double b2 = (Eigen::RowVector2d(theta_p, 1.0) * ci * Eigen::Vector2d(theta, 1.0))(0);
    if (std::abs(b1) <= 1e-10 || std::abs(b2) <= 1e-10) continue;
    if (d % 2 == 0 && (b1 <= 0.0 || b2 <= 0.0)) continue;
    const double xi1 = 1.0 / signed_root(b1, d);
    const double xi2 = 1.0 / signed_root(b2, d);
    Matrix n_t(2, 2);
    n_t << xi1, xi1 * eta, xi2 * theta, xi2;
    const Matrix k = n_t * xs * n_t.transpose();
    if (!(k(0, 0) > 0.0) || !(k(1, 1) > 0.0) || k(0, 1) == 0.0) continue;
    const double s1 = std::sqrt(k(0, 0));
    const double s2 = std::copysign(std::sqrt(k(1, 1)), k(0, 1));
    PluginEstimate e;
    e.betas_hat = Vector(2);
    e.betas_hat << std::pow(s1, d), std::pow(s2, d);
    const double rho = k(0, 1) / (s1 * s2);
    e.R_uu_hat = Matrix(2, 2);
    e.R_uu_hat << 1.0, rho, rho, 1.0;
    e.R_uv_hat = Eigen::Vector2d(1.0 / s1, 1.0 / s2).asDiagonal() * n_t;
    canonicalize(e, d);
    finish(e, pm);
    if (!(e.residual < 1e-8)) continue;
    const Vector key = pack(layout, e);
    const bool dup = std::any_of(keys.begin(), keys.end(), [&](const Vector& o) {
      return (o - key).cwiseAbs().maxCoeff() <= 1e-9;
    });
    if (dup) continue;
    keys.push_back(key);
    out.push_back(std::move(e));
  }
  std::stable_sort(out.begin(), out.end(), [](const PluginEstimate& a, const PluginEstimate& b) {
    if (a.valid != b.valid) return a.valid;
    return a.objective > b.objective;
  });
  return out;
}

std::optional<PluginEstimate> select_estimate(const std::vector<PluginEstimate>& estimates) {
  const PluginEstimate* best = nullptr;
  for (const auto& e : estimates) {
    if (!e.valid) continue;
    if (!best || e.objective > best->objective) best = &e;
  }
  if (!best) return std::nullopt;
  return *best;
}

std::string to_string(EstimateStatus s) {
  return s == EstimateStatus::Informative ? "informative" : "uninformative";
}

EstimateOutcome estimate_from_tensor(const SymTensor& t, int r, const EstimateOptions& opts) {
  EstimateOutcome out;
  out.critical = find_critical_points(t, r, opts.init, opts.critical);
  if (!out.critical.report.converged) {
    throw NonconvergenceError("critical point iteration did not converge in " +
                                  std::to_string(out.critical.report.iterations) + " iterations",
                              out.critical.report.residual);
  }
  SummaryStats stats;
  stats.R_vv = gram(out.critical.point.vs);
  stats.gammas = out.critical.point.gammas;
  PluginMatrices pm;
  try {
    pm = plugin_matrices(stats, t.order());
  } catch (const HypothesisViolation& e) {
    out.reason = e.what();
    return out;
  } catch (const SingularMatrixError& e) {
    out.reason = e.what();
    return out;
  }
  if (opts.rank2_closed_form && r == 2) {
    try {
      out.candidates = solve_plugin_rank2(pm);
    } catch (const SingularMatrixError& e) {
      out.reason = e.what();
      return out;
    }
  } else {
    out.candidates = solve_plugin_general(pm, r, opts.plugin);
  }
  out.estimate = select_estimate(out.candidates);
  if (out.estimate) {
    out.status = EstimateStatus::Informative;
  } else {
    out.reason = out.candidates.empty() ? "plug-in system has no solution" : "plug-in system has no valid solution";
  }
  return out;
}

}  // namespace spiked
