#include "spiked/critical.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "spiked/errors.hpp"
#include "spiked/rng.hpp"

namespace spiked {

namespace {

void check_point(const SymTensor& t, const CriticalPoint& cp) {
  if (cp.vs.cols() != cp.gammas.size()) {
    throw DimensionError("critical point has " + std::to_string(cp.gammas.size()) + " weights and " +
                         std::to_string(cp.vs.cols()) + " vectors");
  }
  if (cp.vs.rows() != t.dim()) {
    throw DimensionError("critical point vectors have length " + std::to_string(cp.vs.rows()) +
                         ", tensor dim is " + std::to_string(t.dim()));
  }
  if (cp.rank() < 1) throw InvalidArgument("critical point needs at least one component");
}

double smallest_eigenvalue(const Matrix& sym) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

// Columns T(v_i^{d-1}).
Matrix contracted_columns(const SymTensor& t, const Matrix& vs) {
  return contract_vectors(t, vs);
}

double residual_from(const CriticalPoint& cp, const Matrix& f, int d) {
  const Matrix coeff = hadamard_power(gram(cp.vs), d - 1);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < cp.rank(); ++i) {
    Vector g = f.col(i);
    for (Eigen::Index j = 0; j < cp.rank(); ++j) g -= cp.gammas[j] * coeff(i, j) * cp.vs.col(j);
    worst = std::max(worst, g.norm() + std::abs(cp.vs.col(i).norm() - 1.0));
  }
  return worst;
}

CriticalPoint update_from(const CriticalPoint& cp, const Matrix& f, int d) {
  const Matrix h = hadamard_power(gram(cp.vs), d - 1);
  Eigen::LDLT<Matrix> ldlt(h);
  const double lo = smallest_eigenvalue(h);
  if (ldlt.info() != Eigen::Success || !(lo > 0.0)) {
    throw SingularMatrixError("Hadamard power of R_vv is singular", lo);
  }
  // Y = F H^{-1}; H is symmetric so this is (H^{-1} F^T)^T.
  const Matrix y = ldlt.solve(f.transpose()).transpose();
  CriticalPoint next;
  next.gammas.resize(cp.rank());
  next.vs.resize(cp.vs.rows(), cp.vs.cols());
  for (Eigen::Index j = 0; j < cp.rank(); ++j) {
    const double norm = y.col(j).norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) {
      throw SingularMatrixError("iterate collapsed to a zero block", lo);
    }
    const double sign = y.col(j).dot(cp.vs.col(j)) < 0.0 ? -1.0 : 1.0;
    next.gammas[j] = sign * norm;
    next.vs.col(j) = y.col(j) / next.gammas[j];
  }
  next.sort_by_weight();
  return next;
}

// Replaces v_j by a unit vector pushed away from the span of the other columns.
void perturb_column(Matrix& vs, Eigen::Index j, std::uint64_t seed) {
  CounterRng rng(seed, 2);
  Vector w(vs.rows());
  for (Eigen::Index k = 0; k < w.size(); ++k) w[k] = rng.normal();
  for (int pass = 0; pass < 2; ++pass) {
    for (Eigen::Index k = 0; k < vs.cols(); ++k) {
      if (k == j) continue;
      const double nk = vs.col(k).squaredNorm();
      if (nk > 0) w -= (w.dot(vs.col(k)) / nk) * vs.col(k);
    }
  }
  if (w.norm() == 0.0) return;
  w.normalize();
  vs.col(j) = (vs.col(j) + w).normalized();
}

// Index of the vector to move when the Hadamard power becomes ill conditioned:
// the later member of the most correlated pair.
Eigen::Index most_collinear(const Matrix& r_vv) {
  Eigen::Index best = r_vv.cols() - 1;
  double worst = -1.0;
  for (Eigen::Index j = 1; j < r_vv.cols(); ++j) {
    for (Eigen::Index i = 0; i < j; ++i) {
      if (std::abs(r_vv(i, j)) > worst) {
        worst = std::abs(r_vv(i, j));
        best = j;
      }
    }
  }
  return best;
}

}  // namespace

void CriticalPoint::sort_by_weight() {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(gammas.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return std::abs(gammas[a]) > std::abs(gammas[b]); });
  Vector g(gammas.size());
  Matrix v(vs.rows(), vs.cols());
  for (std::size_t k = 0; k < order.size(); ++k) {
    g[static_cast<Eigen::Index>(k)] = gammas[order[k]];
    v.col(static_cast<Eigen::Index>(k)) = vs.col(order[k]);
  }
  gammas = std::move(g);
  vs = std::move(v);
}

Vector CriticalPoint::stacked() const {
  Vector out(vs.rows() * vs.cols());
  for (Eigen::Index i = 0; i < vs.cols(); ++i) out.segment(i * vs.rows(), vs.rows()) = gammas[i] * vs.col(i);
  return out;
}

Matrix gram(const Matrix& vectors) { return vectors.transpose() * vectors; }

Matrix hadamard_power(const Matrix& m, int k) {
  if (k < 0) throw InvalidArgument("negative Hadamard exponent");
  Matrix out = Matrix::Ones(m.rows(), m.cols());
  for (int p = 0; p < k; ++p) out = out.cwiseProduct(m);
  return out;
}

Matrix weight_matrix(const Matrix& R_vv, const Vector& gammas, int d) {
  const Eigen::Index r = gammas.size();
  if (R_vv.rows() != r || R_vv.cols() != r) throw DimensionError("R_vv and gammas disagree in size");
  for (Eigen::Index i = 0; i < r; ++i) {
    if (gammas[i] == 0.0) throw InvalidArgument("weight gamma_" + std::to_string(i + 1) + " is zero");
  }
  const Matrix h = hadamard_power(R_vv, d - 1);
  Eigen::SelfAdjointEigenSolver<Matrix> es(h);
  const double lo = es.eigenvalues()(0);
  const double hi = es.eigenvalues()(r - 1);
  if (std::abs(lo) <= 1e-12 * std::max(1.0, std::abs(hi))) {
    throw SingularMatrixError("Hadamard power of R_vv is singular", lo);
  }
  const Matrix h_inv = es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal() *
                       es.eigenvectors().transpose();
  Vector ratios(r);
  for (Eigen::Index i = 0; i < r; ++i) ratios[i] = gammas[r - 1] / gammas[i];
  return h_inv * ratios.asDiagonal();
}

Matrix flatten(const SymTensor& t, const CriticalPoint& cp) {
  check_point(t, cp);
  const int d = t.order();
  const Eigen::Index r = cp.rank();
  const Eigen::Index n = t.dim();
  const Matrix w = weight_matrix(gram(cp.vs), cp.gammas, d);
  Matrix out(r * n, r * n);
  for (Eigen::Index i = 0; i < r; ++i) {
    const Matrix a = contract_matrix(t, cp.vs.col(i));
    for (Eigen::Index j = 0; j < r; ++j) out.block(j * n, i * n, n, n) = w(j, i) * a;
  }
  return out;
}

Matrix symmetrized_flatten(const SymTensor& t, const CriticalPoint& cp) {
  check_point(t, cp);
  const int d = t.order();
  const Eigen::Index r = cp.rank();
  const Eigen::Index n = t.dim();
  for (Eigen::Index i = 0; i < r; ++i) {
    if (cp.gammas[i] == 0.0) throw InvalidArgument("weight gamma_" + std::to_string(i + 1) + " is zero");
  }
  const Matrix h = hadamard_power(gram(cp.vs), d - 1);
  Eigen::SelfAdjointEigenSolver<Matrix> es(h);
  const double lo = es.eigenvalues()(0);
  if (!(lo > 1e-12 * std::max(1.0, es.eigenvalues()(r - 1)))) {
    throw SingularMatrixError("Hadamard power of R_vv is not positive definite", lo);
  }
  const Matrix s = es.operatorInverseSqrt();
  std::vector<Matrix> blocks;
  blocks.reserve(static_cast<std::size_t>(r));
  for (Eigen::Index k = 0; k < r; ++k) {
    blocks.push_back((cp.gammas[r - 1] / cp.gammas[k]) * contract_matrix(t, cp.vs.col(k)));
  }
  Matrix out = Matrix::Zero(r * n, r * n);
  for (Eigen::Index j = 0; j < r; ++j) {
    for (Eigen::Index i = 0; i < r; ++i) {
      auto blk = out.block(j * n, i * n, n, n);
      for (Eigen::Index k = 0; k < r; ++k) blk += (s(j, k) * s(k, i)) * blocks[static_cast<std::size_t>(k)];
    }
  }
  const Matrix sym = 0.5 * (out + out.transpose());
  return sym;
}

double kkt_residual(const SymTensor& t, const CriticalPoint& cp) {
  check_point(t, cp);
  return residual_from(cp, contracted_columns(t, cp.vs), t.order());
}

CriticalPoint random_start(int dim, int r, std::uint64_t seed) {
  CriticalPoint cp;
  cp.vs = correlated_unit_vectors(Matrix::Identity(r, r), dim, seed);
  cp.gammas = Vector::Ones(r);
  return cp;
}

CriticalPoint iterate_once(const SymTensor& t, const CriticalPoint& cp) {
  check_point(t, cp);
  return update_from(cp, contracted_columns(t, cp.vs), t.order());
}

CriticalResult find_critical_points(const SymTensor& t, int r, const std::optional<CriticalPoint>& init,
                                    const CriticalOptions& opts) {
  if (r < 1) throw InvalidArgument("rank must be at least 1");
  if (!(opts.tol > 0.0)) throw InvalidArgument("tolerance must be positive");
  if (r > t.dim()) throw InvalidArgument("rank exceeds tensor dimension");
  const int d = t.order();

  CriticalResult out;
  CriticalReport& rep = out.report;
  CriticalPoint cp = init ? *init : random_start(t.dim(), r, opts.seed);
  if (cp.rank() != r) throw DimensionError("initial point has the wrong rank");
  check_point(t, cp);
  for (Eigen::Index i = 0; i < cp.vs.cols(); ++i) cp.vs.col(i).normalize();
  cp.sort_by_weight();

  int perturbations_since_restart = 0;
  auto restart = [&](double lo) {
    if (rep.restarts >= opts.max_restarts) {
      throw SingularMatrixError("iterates remain collinear after " + std::to_string(rep.restarts) + " restarts",
                                lo);
    }
    ++rep.restarts;
    perturbations_since_restart = 0;
    cp = random_start(t.dim(), r, derive_seed(opts.seed, static_cast<std::uint64_t>(rep.restarts)));
  };

  // One contraction per step serves both the residual of cp and its update.
  Matrix f = contracted_columns(t, cp.vs);
  rep.residual = residual_from(cp, f, d);
  rep.converged = rep.residual <= opts.tol;
  while (!rep.converged && rep.iterations < opts.max_iter) {
    double lo = smallest_eigenvalue(hadamard_power(gram(cp.vs), d - 1));
    bool moved = false;
    while (lo < opts.collinearity_floor) {
      moved = true;
      if (perturbations_since_restart >= opts.max_perturbations) {
        restart(lo);
      } else {
        ++perturbations_since_restart;
        ++rep.perturbations;
        perturb_column(cp.vs, most_collinear(gram(cp.vs)),
                       derive_seed(opts.seed, 1000u + static_cast<std::uint64_t>(rep.perturbations)));
      }
      lo = smallest_eigenvalue(hadamard_power(gram(cp.vs), d - 1));
    }
    if (moved) f = contracted_columns(t, cp.vs);
    try {
      cp = update_from(cp, f, d);
    } catch (const SingularMatrixError& e) {
      if (perturbations_since_restart >= opts.max_perturbations) {
        restart(e.smallest_eigenvalue());
      } else {
        ++perturbations_since_restart;
        ++rep.perturbations;
        perturb_column(cp.vs, most_collinear(gram(cp.vs)),
                       derive_seed(opts.seed, 1000u + static_cast<std::uint64_t>(rep.perturbations)));
      }
      f = contracted_columns(t, cp.vs);
      continue;
    }
    ++rep.iterations;
    f = contracted_columns(t, cp.vs);
    rep.residual = residual_from(cp, f, d);
    rep.trace.push_back(rep.residual);
    rep.converged = rep.residual <= opts.tol;
  }
  // (gamma_j, v_j) -> (-gamma_j, -v_j) preserves stationarity for odd d.
  if (d % 2 == 1) {
    for (Eigen::Index j = 0; j < cp.rank(); ++j) {
      if (cp.gammas[j] < 0.0) {
        cp.gammas[j] = -cp.gammas[j];
        cp.vs.col(j) *= -1.0;
      }
    }
  }
  out.point = std::move(cp);
  return out;
}

SummaryStats summary_statistics(const CriticalPoint& cp, const SpikeModel& model) {
  if (model.us.rows() != cp.vs.rows()) throw DimensionError("signal and estimate dimensions differ");
  SummaryStats s;
  s.R_vv = gram(cp.vs);
  s.R_uv = model.us.transpose() * cp.vs;
  s.R_uu = gram(model.us);
  s.gammas = cp.gammas;
  return s;
}

}  // namespace spiked
