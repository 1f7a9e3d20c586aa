#include "spiked/spectrum.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "spiked/errors.hpp"

namespace spiked {

double unit_radius(int d) { return 2.0 / std::sqrt(static_cast<double>(d) * (d - 1)); }

SpectralLimit kappa_spectrum(const Matrix& W, int d) {
  if (W.rows() != W.cols() || W.rows() == 0) throw DimensionError("W must be a nonempty square matrix");
  if (d < 2) throw InvalidArgument("order must be at least 2");
  const Eigen::Index s = W.rows();
  const Matrix scaled = unit_radius(d) * W;
  Eigen::EigenSolver<Matrix> es(scaled);
  if (es.info() != Eigen::Success) throw HypothesisViolation("eigendecomposition of W failed");
  const auto& ev = es.eigenvalues();
  for (Eigen::Index i = 0; i < s; ++i) {
    if (std::abs(ev[i].imag()) > 1e-8 * std::max(1.0, std::abs(ev[i]))) {
      throw HypothesisViolation("W has a complex eigenvalue; the limiting law needs a real spectrum");
    }
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(s));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return std::abs(ev[a].real()) > std::abs(ev[b].real());
  });
  SpectralLimit lim;
  lim.d = d;
  lim.W = W;
  lim.kappas.resize(s);
  lim.P.resize(s, s);
  const Eigen::MatrixXcd vecs = es.eigenvectors();
  for (Eigen::Index k = 0; k < s; ++k) {
    const Eigen::Index src = order[static_cast<std::size_t>(k)];
    lim.kappas[k] = ev[src].real();
    // Eigenvectors of real eigenvalues are real up to a complex phase; rotate it away.
    Eigen::VectorXcd v = vecs.col(src);
    Eigen::Index piv = 0;
    v.cwiseAbs().maxCoeff(&piv);
    v *= std::conj(v[piv]) / std::abs(v[piv]);
    lim.P.col(k) = v.real().normalized();
  }
  Eigen::FullPivLU<Matrix> lu(lim.P);
  if (!lu.isInvertible() || lu.rcond() < 1e-12) {
    throw HypothesisViolation("W is not diagonalizable with a well-conditioned eigenbasis");
  }
  lim.P_inv = lu.inverse();
  return lim;
}

std::array<double, 2> rank2_kappas(double nu, double lambda, int d) {
  const double one_m = 1.0 - lambda * lambda;
  if (!(one_m > 0.0)) throw InvalidArgument("rank-2 closed form needs |lambda| < 1");
  const double disc = (nu + 1) * (nu + 1) - 4 * nu * one_m;
  if (disc < 0) throw HypothesisViolation("complex kappa in rank-2 closed form");
  const double denom = std::sqrt(static_cast<double>(d) * (d - 1)) * one_m;
  double a = (nu + 1 + std::sqrt(disc)) / denom;
  double b = (nu + 1 - std::sqrt(disc)) / denom;
  if (std::abs(b) > std::abs(a)) std::swap(a, b);
  return {a, b};
}

double semicircle_density(double x, double radius) {
  const double a = std::abs(radius);
  if (a == 0.0 || std::abs(x) >= a) return 0.0;
  return 2.0 / (std::numbers::pi * a * a) * std::sqrt(a * a - x * x);
}

double semicircle_cdf(double x, double radius) {
  const double a = std::abs(radius);
  if (a == 0.0) return x >= 0.0 ? 1.0 : 0.0;
  if (x <= -a) return 0.0;
  if (x >= a) return 1.0;
  const double v = 0.5 + x * std::sqrt(a * a - x * x) / (std::numbers::pi * a * a) +
                   std::asin(x / a) / std::numbers::pi;
  return std::clamp(v, 0.0, 1.0);
}

double limit_density(double x, const SpectralLimit& lim) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < lim.kappas.size(); ++i) acc += semicircle_density(x, lim.kappas[i]);
  return acc / static_cast<double>(lim.kappas.size());
}

double limit_cdf(double x, const SpectralLimit& lim) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < lim.kappas.size(); ++i) acc += semicircle_cdf(x, lim.kappas[i]);
  return acc / static_cast<double>(lim.kappas.size());
}

double zeta_real(double x, double kappa) {
  if (kappa == 0.0) {
    if (x == 0.0) throw HypothesisViolation("zeta(0) evaluated at z = 0");
    return -1.0 / x;
  }
  const double k = std::abs(kappa);
  if (std::abs(x) < k) {
    throw HypothesisViolation("real evaluation point lies strictly inside the spectral support");
  }
  const double s = std::copysign(std::sqrt(std::max(x * x - k * k, 0.0)), x);
  return -2.0 / (x + s);
}

Complex zeta(Complex z, double kappa) {
  if (z.imag() == 0.0) return zeta_real(z.real(), kappa);
  if (kappa == 0.0) return -1.0 / z;
  const Complex s = std::sqrt(z - kappa) * std::sqrt(z + kappa);
  return -2.0 / (z + s);
}

CMatrix stieltjes_matrix(Complex z, const SpectralLimit& lim) {
  if (z.imag() == 0.0) throw HypothesisViolation("stieltjes_matrix needs Im z != 0");
  const Eigen::Index s = lim.kappas.size();
  Eigen::VectorXcd diag(s);
  for (Eigen::Index i = 0; i < s; ++i) diag[i] = zeta(z, lim.kappas[i]);
  return lim.P.cast<Complex>() * diag.asDiagonal() * lim.P_inv.cast<Complex>();
}

Matrix stieltjes_matrix_real(double x, const SpectralLimit& lim) {
  if (std::abs(x) < lim.radius()) {
    throw HypothesisViolation("real evaluation point lies strictly inside the spectral support");
  }
  const Eigen::Index s = lim.kappas.size();
  Vector diag(s);
  for (Eigen::Index i = 0; i < s; ++i) diag[i] = zeta_real(x, lim.kappas[i]);
  return lim.P * diag.asDiagonal() * lim.P_inv;
}

double fixed_point_residual(Complex z, const SpectralLimit& lim) {
  const CMatrix g = stieltjes_matrix(z, lim);
  const CMatrix w = lim.W.cast<Complex>();
  const double c = 1.0 / (static_cast<double>(lim.d) * (lim.d - 1));
  const CMatrix r = c * g * w * g * w + z * g + CMatrix::Identity(g.rows(), g.cols());
  return r.cwiseAbs().maxCoeff();
}

Complex g1(Complex z, int d) { return zeta(z, unit_radius(d)); }

double g1_real(double x, int d) { return zeta_real(x, unit_radius(d)); }

std::vector<double> empirical_spectrum(const SymTensor& t, const CriticalPoint& cp) {
  const Matrix m = symmetrized_flatten(t, cp);
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw Error("symmetric eigensolver failed");
  const Vector& ev = es.eigenvalues();
  return {ev.data(), ev.data() + ev.size()};
}

double ks_distance(std::span<const double> sample, const std::function<double(double)>& cdf,
                   const std::function<double(double)>& cdf_left) {
  if (sample.empty()) throw InvalidArgument("KS distance of an empty sample");
  std::vector<double> xs(sample.begin(), sample.end());
  std::sort(xs.begin(), xs.end());
  const auto& left = cdf_left ? cdf_left : cdf;
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    d = std::max(d, static_cast<double>(i + 1) / n - cdf(xs[i]));
    d = std::max(d, left(xs[i]) - static_cast<double>(i) / n);
  }
  return std::clamp(d, 0.0, 1.0);
}

double ks_distance(std::span<const double> sample, const SpectralLimit& lim) {
  // The mixture CDF is continuous unless some kappa is exactly zero.
  const auto cdf = [&](double x) { return limit_cdf(x, lim); };
  const auto left = [&](double x) {
    return x == 0.0 ? limit_cdf(std::nextafter(0.0, -1.0), lim) : limit_cdf(x, lim);
  };
  return ks_distance(sample, cdf, left);
}

}  // namespace spiked
