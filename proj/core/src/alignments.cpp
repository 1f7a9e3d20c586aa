#include "spiked/alignments.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "spiked/critical.hpp"
#include "spiked/errors.hpp"
#include "spiked/least_squares.hpp"
#include "spiked/parallel.hpp"

namespace spiked {

namespace {

struct Layout {
  int r;
  int s;
  int size() const { return s + r * s + s * (s - 1) / 2; }
};

void unpack(const Layout& l, const Vector& x, Vector& gammas, Matrix& R_uv, Matrix& R_vv) {
  gammas = x.head(l.s);
  R_uv = Eigen::Map<const Matrix>(x.data() + l.s, l.r, l.s);
  R_vv = Matrix::Identity(l.s, l.s);
  Eigen::Index k = l.s + l.r * l.s;
  for (int j = 1; j < l.s; ++j) {
    for (int i = 0; i < j; ++i) {
      R_vv(i, j) = R_vv(j, i) = x[k++];
    }
  }
}

Vector pack(const Layout& l, const Vector& gammas, const Matrix& R_uv, const Matrix& R_vv) {
  Vector x(l.size());
  x.head(l.s) = gammas;
  Eigen::Map<Matrix>(x.data() + l.s, l.r, l.s) = R_uv;
  Eigen::Index k = l.s + l.r * l.s;
  for (int j = 1; j < l.s; ++j)
    for (int i = 0; i < j; ++i) x[k++] = R_vv(i, j);
  return x;
}

Vector flatten_equations(const AlignmentEquations& e) {
  Vector f(e.E1.size() + e.E2.size());
  f.head(e.E1.size()) = Eigen::Map<const Vector>(e.E1.data(), e.E1.size());
  f.tail(e.E2.size()) = Eigen::Map<const Vector>(e.E2.data(), e.E2.size());
  return f;
}

void check_problem(const Vector& betas, const Matrix& R_uu, int d) {
  if (d < 3) throw InvalidArgument("order must be at least 3");
  if (R_uu.rows() != betas.size() || R_uu.cols() != betas.size()) {
    throw DimensionError("R_uu must be r x r with r = len(betas)");
  }
}

// v_j -> -v_j: for odd d the weight changes sign as well.
void flip_component(AlignmentSolution& sol, Eigen::Index j, bool flip_gamma) {
  if (flip_gamma) sol.gammas[j] = -sol.gammas[j];
  sol.R_uv.col(j) *= -1.0;
  for (Eigen::Index i = 0; i < sol.R_vv.rows(); ++i) {
    if (i == j) continue;
    sol.R_vv(i, j) = -sol.R_vv(i, j);
    sol.R_vv(j, i) = -sol.R_vv(j, i);
  }
}

// Picks one representative of each sign class: gamma_j > 0 for odd d, and the
// largest-magnitude entry of column j of R_uv positive for even d.
AlignmentSolution canonicalize(AlignmentSolution sol, const Vector& betas, const Matrix& R_uu, int d, double tol) {
  // The system is equivariant under relabelling the v_j, so order by |gamma| when that is still a root.
  {
    std::vector<Eigen::Index> order(static_cast<std::size_t>(sol.gammas.size()));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
      return std::abs(sol.gammas[a]) > std::abs(sol.gammas[b]);
    });
    if (!std::is_sorted(order.begin(), order.end())) {
      AlignmentSolution p = sol;
      for (std::size_t k = 0; k < order.size(); ++k) {
        const auto kk = static_cast<Eigen::Index>(k);
        p.gammas[kk] = sol.gammas[order[k]];
        p.R_uv.col(kk) = sol.R_uv.col(order[k]);
        for (std::size_t m = 0; m < order.size(); ++m) p.R_vv(kk, static_cast<Eigen::Index>(m)) = sol.R_vv(order[k], order[m]);
      }
      try {
        p.residual = alignment_residual(p, betas, R_uu, d);
        if (p.residual < tol) sol = std::move(p);
      } catch (const Error&) {
      }
    }
  }
  for (Eigen::Index j = 0; j < sol.gammas.size(); ++j) {
    AlignmentSolution flipped = sol;
    bool flip = false;
    if (d % 2 == 1) {
      flip = sol.gammas[j] < 0.0;
    } else {
      Eigen::Index piv = 0;
      if (sol.R_uv.rows() > 0 && sol.R_uv.col(j).cwiseAbs().maxCoeff(&piv) > 1e-9) flip = sol.R_uv(piv, j) < 0.0;
    }
    if (!flip) continue;
    flip_component(flipped, j, d % 2 == 1);
    try {
      flipped.residual = alignment_residual(flipped, betas, R_uu, d);
    } catch (const Error&) {
      continue;
    }
    if (flipped.residual < tol) sol = std::move(flipped);
  }
  return sol;
}

bool lex_less(const Vector& a, const Vector& b) {
  for (Eigen::Index k = 0; k < a.size(); ++k) {
    if (a[k] != b[k]) return a[k] < b[k];
  }
  return false;
}

}  // namespace

LimitTerms limit_terms(const Vector& gammas, const Matrix& R_vv, int d) {
  const Eigen::Index s = gammas.size();
  if (R_vv.rows() != s || R_vv.cols() != s) throw DimensionError("R_vv must be s x s");
  LimitTerms t;
  t.H = hadamard_power(R_vv, d - 1);
  t.W = weight_matrix(R_vv, gammas, d);
  t.lim = kappa_spectrum(t.W, d);
  const double z = gammas[s - 1] / (d - 1);
  t.G = stieltjes_matrix_real(z, t.lim);
  const Matrix gw = t.G * t.W;
  t.M = gammas.asDiagonal() * t.H + (1.0 / d) * hadamard_power(R_vv, d - 2).cwiseProduct(gw);
  t.C = R_vv * t.M + (1.0 / (static_cast<double>(d) * (d - 1))) * (t.H * gw).transpose();
  return t;
}

double gamma_bound(const Vector& gammas, const Matrix& R_vv, int d) {
  const Matrix w = weight_matrix(R_vv, gammas, d);
  return (d - 1) * kappa_spectrum(w, d).radius();
}

AlignmentEquations alignment_equations(const Vector& gammas, const Matrix& R_uv, const Matrix& R_vv,
                                       const Vector& betas, const Matrix& R_uu, int d) {
  check_problem(betas, R_uu, d);
  if (R_uv.rows() != betas.size() || R_uv.cols() != gammas.size()) throw DimensionError("R_uv must be r x s");
  const LimitTerms t = limit_terms(gammas, R_vv, d);
  const Matrix signal = betas.asDiagonal() * hadamard_power(R_uv, d - 1);
  AlignmentEquations e;
  e.E1 = R_uu * signal - R_uv * t.M;
  e.E2 = R_uv.transpose() * signal - t.C;
  return e;
}

double alignment_residual(const AlignmentSolution& candidate, const Vector& betas, const Matrix& R_uu, int d) {
  const auto e = alignment_equations(candidate.gammas, candidate.R_uv, candidate.R_vv, betas, R_uu, d);
  return std::max(e.E1.cwiseAbs().maxCoeff(), e.E2.cwiseAbs().maxCoeff());
}

bool is_valid_solution(const AlignmentSolution& sol, const Matrix& R_uu, int d, double tol) {
  if (!(sol.residual < tol)) return false;
  const Eigen::Index s = sol.gammas.size();
  const Eigen::Index r = sol.R_uv.rows();
  if (sol.kappas.size() == 0) return false;
  if (!(std::abs(sol.gammas[s - 1]) > (d - 1) * std::abs(sol.kappas[0]))) return false;
  // For odd d every critical point has a representative with all gamma_j > 0,
  // and the limiting equations describe that one (they are not flip-invariant).
  if (d % 2 == 1 && (sol.gammas.array() <= 0.0).any()) return false;
  for (Eigen::Index i = 1; i < s; ++i) {
    if (std::abs(sol.gammas[i]) > std::abs(sol.gammas[i - 1]) * (1 + 1e-12)) return false;
  }
  constexpr double slack = 1e-8;
  if (sol.R_uv.size() && sol.R_uv.cwiseAbs().maxCoeff() > 1 + slack) return false;
  if (sol.R_vv.cwiseAbs().maxCoeff() > 1 + slack) return false;
  Matrix joint(r + s, r + s);
  joint << R_uu, sol.R_uv, sol.R_uv.transpose(), sol.R_vv;
  Eigen::SelfAdjointEigenSolver<Matrix> es(joint, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0) >= -slack;
}

std::vector<AlignmentSolution> solve_alignment_system(const Vector& betas, const Matrix& R_uu, int d, int s,
                                                      const AlignmentOptions& opts) {
  check_problem(betas, R_uu, d);
  if (s < 1) throw InvalidArgument("s must be at least 1");
  if (opts.n_starts < 1) throw InvalidArgument("n_starts must be positive");
  const Layout layout{static_cast<int>(betas.size()), s};
  const int n = layout.size();

  const double beta_max = betas.size() ? betas.cwiseAbs().maxCoeff() : 0.0;
  const double gamma_hi = beta_max > 0 ? 2 * beta_max : 2 * (d - 1) * unit_radius(d);
  Vector lo(n), hi(n);
  lo.head(s).setZero();
  hi.head(s).setConstant(gamma_hi);
  lo.segment(s, layout.r * s).setConstant(-1.0);
  hi.segment(s, layout.r * s).setConstant(1.0);
  lo.tail(n - s - layout.r * s).setConstant(-0.9);
  hi.tail(n - s - layout.r * s).setConstant(0.9);
  auto starts = halton_points(opts.n_starts, lo, hi, opts.seed);
  // Signal-aligned starts, v_j = u_{sigma(j)} for every map sigma: [s] -> [r]. Box
  // starts alone land in the basin of strongly correlated roots only rarely.
  if (layout.r > 0 && std::pow(static_cast<double>(layout.r), s) <= 256.0) {
    std::vector<int> sigma(static_cast<std::size_t>(s), 0);
    while (true) {
      Vector g(s);
      Matrix ruv(layout.r, s), rvv(s, s);
      for (int j = 0; j < s; ++j) {
        const int a = sigma[static_cast<std::size_t>(j)];
        g[j] = std::max(std::abs(betas[a]), 1e-3 * gamma_hi);
        ruv.col(j) = 0.95 * R_uu.col(a);
        for (int k = 0; k < s; ++k) rvv(j, k) = std::clamp(R_uu(a, sigma[static_cast<std::size_t>(k)]), -0.9, 0.9);
      }
      rvv.diagonal().setOnes();
      starts.push_back(pack(layout, g, ruv, rvv));
      int pos = 0;
      while (pos < s && ++sigma[static_cast<std::size_t>(pos)] == layout.r) sigma[static_cast<std::size_t>(pos++)] = 0;
      if (pos == s) break;
    }
  }

  const ResidualFn fn = [&](const Vector& x) -> std::optional<Vector> {
    Vector g;
    Matrix ruv, rvv;
    unpack(layout, x, g, ruv, rvv);
    try {
      return flatten_equations(alignment_equations(g, ruv, rvv, betas, R_uu, d));
    } catch (const Error&) {
      return std::nullopt;
    }
  };

  LmOptions lm;
  lm.max_iter = opts.max_iter;
  std::vector<std::optional<AlignmentSolution>> found(starts.size());
  parallel_for(starts.size(), opts.threads, [&](std::size_t k) {
    Vector x = starts[k];
    Vector g;
    Matrix ruv, rvv;
    unpack(layout, x, g, ruv, rvv);
    // kappa depends only on ratios of gamma and on R_vv, so scaling gamma up
    // reaches the evaluable region whenever W has a real spectrum.
    double bound = 0.0;
    try {
      bound = gamma_bound(g, rvv, d);
    } catch (const Error&) {
      return;
    }
    const double smallest = std::abs(g[s - 1]);
    if (smallest <= bound) {
      g *= 1.05 * bound / std::max(smallest, 1e-300);
      x.head(s) = g;
    }
    const LmResult res = levenberg_marquardt(fn, x, lm);
    if (!res.feasible) return;
    AlignmentSolution sol;
    unpack(layout, res.x, sol.gammas, sol.R_uv, sol.R_vv);
    try {
      sol.residual = alignment_residual(sol, betas, R_uu, d);
    } catch (const Error&) {
      return;
    }
    if (!(sol.residual < opts.tol)) return;
    sol = canonicalize(std::move(sol), betas, R_uu, d, opts.tol);
    found[k] = std::move(sol);
  });

  std::vector<AlignmentSolution> out;
  std::vector<Vector> keys;
  for (auto& f : found) {
    if (!f) continue;
    const Vector key = pack(layout, f->gammas, f->R_uv, f->R_vv);
    const bool dup = std::any_of(keys.begin(), keys.end(), [&](const Vector& other) {
      return (other - key).cwiseAbs().maxCoeff() <= opts.dedup_tol;
    });
    if (dup) continue;
    try {
      f->kappas = limit_terms(f->gammas, f->R_vv, d).lim.kappas;
    } catch (const Error&) {
      continue;
    }
    f->valid = is_valid_solution(*f, R_uu, d, opts.tol);
    keys.push_back(key);
    out.push_back(std::move(*f));
  }
  std::sort(out.begin(), out.end(), [&](const AlignmentSolution& a, const AlignmentSolution& b) {
    if (a.valid != b.valid) return a.valid;
    // Descending by the packed unknowns.
    return lex_less(pack(layout, b.gammas, b.R_uv, b.R_vv), pack(layout, a.gammas, a.R_uv, a.R_vv));
  });
  return out;
}

double asymptotic_squared_error(const Vector& betas, const Matrix& R_uu, const Vector& gammas,
                                const Matrix& R_vv, int d) {
  if (R_uu.rows() != betas.size() || R_uu.cols() != betas.size()) throw DimensionError("R_uu must be r x r");
  if (R_vv.rows() != gammas.size() || R_vv.cols() != gammas.size()) throw DimensionError("R_vv must be s x s");
  const double signal = betas.dot(hadamard_power(R_uu, d) * betas);
  const double fit = gammas.dot(hadamard_power(R_vv, d) * gammas);
  return signal - fit;
}

AlignmentSolution select_solution(const std::vector<AlignmentSolution>& solutions, const Vector& betas,
                                  const Matrix& R_uu, int d) {
  const AlignmentSolution* best = nullptr;
  double best_err = 0.0;
  for (const auto& sol : solutions) {
    if (!sol.valid) continue;
    const double err = asymptotic_squared_error(betas, R_uu, sol.gammas, sol.R_vv, d);
    if (!best || err < best_err ||
        (err == best_err && std::abs(sol.gammas[sol.s() - 1]) > std::abs(best->gammas[best->s() - 1]))) {
      best = &sol;
      best_err = err;
    }
  }
  if (!best) throw InvalidArgument("no valid alignment solution to select from");
  return *best;
}

bool has_valid_solution(const Vector& betas, const Matrix& R_uu, int d, int s, const AlignmentOptions& opts) {
  const auto sols = solve_alignment_system(betas, R_uu, d, s, opts);
  return std::any_of(sols.begin(), sols.end(), [](const AlignmentSolution& a) { return a.valid; });
}

ThresholdResult detection_threshold(const Matrix& R_uu, int d, int s, const Vector& direction, double bracket_lo,
                                    double bracket_hi, double tol, const AlignmentOptions& opts) {
  if (!(bracket_lo > 0.0) || !(bracket_hi > bracket_lo)) throw BracketError("bracket must satisfy 0 < lo < hi");
  if (!(tol > 0.0)) throw InvalidArgument("tolerance must be positive");
  ThresholdResult res;
  auto exists = [&](double c) {
    ++res.evaluations;
    return has_valid_solution(c * direction, R_uu, d, s, opts);
  };
  const bool at_hi = exists(bracket_hi);
  const bool at_lo = exists(bracket_lo);
  if (!at_hi || at_lo) {
    std::ostringstream msg;
    msg << "bracket [" << bracket_lo << ", " << bracket_hi << "] does not straddle the threshold: valid solutions "
        << (at_lo ? "exist" : "do not exist") << " at the lower end and " << (at_hi ? "exist" : "do not exist")
        << " at the upper end";
    throw BracketError(msg.str());
  }
  double lo = bracket_lo;
  double hi = bracket_hi;
  while (hi - lo > tol * (hi + lo)) {
    const double mid = 0.5 * (lo + hi);
    if (exists(mid)) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  res.lower = lo;
  res.upper = hi;
  res.value = 0.5 * (lo + hi);
  return res;
}

}  // namespace spiked
