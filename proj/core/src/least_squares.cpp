#include "spiked/least_squares.hpp"

#include <algorithm>
#include <cmath>

#include "spiked/errors.hpp"
#include "spiked/rng.hpp"

namespace spiked {

namespace {

double cost(const Vector& f) { return 0.5 * f.squaredNorm(); }

bool finite(const Vector& f) { return f.allFinite(); }

std::optional<Vector> eval(const ResidualFn& fn, const Vector& x) {
  auto f = fn(x);
  if (f && !finite(*f)) return std::nullopt;
  return f;
}

// Central differences, falling back to one-sided ones next to the infeasible region.
Matrix jacobian(const ResidualFn& fn, const Vector& x, const Vector& f, double rel_step) {
  Matrix j(f.size(), x.size());
  Vector xp = x;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double h = rel_step * std::max(1.0, std::abs(x[k]));
    xp[k] = x[k] + h;
    const auto fp = eval(fn, xp);
    xp[k] = x[k] - h;
    const auto fm = eval(fn, xp);
    xp[k] = x[k];
    if (fp && fm) {
      j.col(k) = (*fp - *fm) / (2 * h);
    } else if (fp) {
      j.col(k) = (*fp - f) / h;
    } else if (fm) {
      j.col(k) = (f - *fm) / h;
    } else {
      j.col(k).setZero();
    }
  }
  return j;
}

}  // namespace

LmResult levenberg_marquardt(const ResidualFn& fn, const Vector& x0, const LmOptions& opts) {
  LmResult res;
  res.x = x0;
  auto f0 = eval(fn, x0);
  if (!f0) return res;
  res.f = std::move(*f0);
  res.feasible = true;
  res.max_abs = res.f.size() ? res.f.cwiseAbs().maxCoeff() : 0.0;
  double lambda = opts.lambda0;
  double c = cost(res.f);
  for (int it = 0; it < opts.max_iter && res.max_abs > opts.target; ++it) {
    res.iterations = it + 1;
    const Matrix j = jacobian(fn, res.x, res.f, opts.fd_step);
    const Matrix jtj = j.transpose() * j;
    const Vector g = j.transpose() * res.f;
    Vector scale = jtj.diagonal().cwiseMax(1e-12);
    bool improved = false;
    while (lambda < 1e16) {
      Matrix a = jtj;
      a.diagonal() += lambda * scale;
      const Vector step = a.ldlt().solve(-g);
      if (!step.allFinite()) {
        lambda *= 10;
        continue;
      }
      const Vector xn = res.x + step;
      auto fn_new = eval(fn, xn);
      if (fn_new && cost(*fn_new) < c) {
        const double rel = step.norm() / std::max(1.0, res.x.norm());
        res.x = xn;
        res.f = std::move(*fn_new);
        c = cost(res.f);
        res.max_abs = res.f.cwiseAbs().maxCoeff();
        lambda = std::max(lambda / 3.0, 1e-12);
        improved = rel > opts.step_tol;
        break;
      }
      lambda *= 4.0;
    }
    if (!improved) break;
  }
  return res;
}

double radical_inverse(std::uint64_t k, int base) {
  double inv = 1.0 / base;
  double f = inv;
  double out = 0.0;
  while (k > 0) {
    out += static_cast<double>(k % static_cast<std::uint64_t>(base)) * f;
    k /= static_cast<std::uint64_t>(base);
    f *= inv;
  }
  return out;
}

std::vector<Vector> halton_points(int n, const Vector& lo, const Vector& hi, std::uint64_t seed) {
  static constexpr int kPrimes[] = {2,  3,  5,  7,  11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47,
                                    53, 59, 61, 67, 71, 73, 79, 83, 89, 97, 101, 103, 107, 109, 113};
  const Eigen::Index dim = lo.size();
  if (hi.size() != dim) throw DimensionError("Halton box bounds differ in length");
  if (dim > static_cast<Eigen::Index>(std::size(kPrimes))) throw InvalidArgument("Halton dimension too large");
  Vector shift = Vector::Zero(dim);
  if (seed != 0) {
    CounterRng rng(seed, 3);
    for (Eigen::Index k = 0; k < dim; ++k) shift[k] = rng.uniform();
  }
  std::vector<Vector> pts;
  pts.reserve(static_cast<std::size_t>(std::max(n, 0)));
  for (int i = 0; i < n; ++i) {
    Vector p(dim);
    for (Eigen::Index k = 0; k < dim; ++k) {
      double u = radical_inverse(static_cast<std::uint64_t>(i + 1), kPrimes[k]) + shift[k];
      u -= std::floor(u);
      p[k] = lo[k] + (hi[k] - lo[k]) * u;
    }
    pts.push_back(std::move(p));
  }
  return pts;
}

}  // namespace spiked
