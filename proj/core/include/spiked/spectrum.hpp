#pragma once

// Limiting spectral law of the flattened matrix: a uniform mixture of
// semicircles whose radii are the eigenvalues kappa of (2/sqrt(d(d-1))) W,
// its Stieltjes matrix G(z), and comparison against empirical spectra.

#include <array>
#include <complex>
#include <functional>
#include <span>
#include <vector>

#include "spiked/critical.hpp"
#include "spiked/tensor.hpp"

namespace spiked {

using Complex = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;

struct SpectralLimit {
  Vector kappas;  // |kappa_1| >= ... >= |kappa_s|
  Matrix P;       // (2/sqrt(d(d-1))) W = P diag(kappa) P^{-1}
  Matrix P_inv;
  Matrix W;
  int d = 3;

  int size() const noexcept { return static_cast<int>(kappas.size()); }
  // Right end of the support, |kappa_1|.
  double radius() const noexcept { return kappas.size() ? std::abs(kappas[0]) : 0.0; }
};

// 2 / sqrt(d(d-1)), the semicircle radius for a single component.
double unit_radius(int d);

// Throws HypothesisViolation if W has eigenvalues with imaginary part beyond
// 1e-8 (relative) or an ill-conditioned eigenbasis.
SpectralLimit kappa_spectrum(const Matrix& W, int d);

// Closed form for s = 2 with nu = gamma_2/gamma_1 and lambda = tau^{d-1}; sorted by |.| descending.
std::array<double, 2> rank2_kappas(double nu, double lambda, int d);

double semicircle_density(double x, double radius);
double semicircle_cdf(double x, double radius);

double limit_density(double x, const SpectralLimit& lim);
double limit_cdf(double x, const SpectralLimit& lim);

// zeta(kappa)(z) = (2/kappa^2)(-z + sqrt(z^2 - kappa^2)), evaluated as
// -2/(z + sqrt(z-kappa) sqrt(z+kappa)), which is the Herglotz branch and exact
// -1/z at kappa = 0. Real z is accepted only on or outside the support.
Complex zeta(Complex z, double kappa);
// Real-axis branch for |x| >= |kappa| (limit from the upper half-plane).
double zeta_real(double x, double kappa);

// G(z) = P diag(zeta(kappa_i)(z)) P^{-1}; requires Im z != 0.
CMatrix stieltjes_matrix(Complex z, const SpectralLimit& lim);
// G on the real axis outside the support: |x| >= |kappa_1|.
Matrix stieltjes_matrix_real(double x, const SpectralLimit& lim);

// || (1/(d(d-1))) G W G W + z G + Id ||_max
double fixed_point_residual(Complex z, const SpectralLimit& lim);

// Rank-one Stieltjes transform (d(d-1)/2)(-z + sqrt(z^2 - 4/(d(d-1)))).
Complex g1(Complex z, int d);
double g1_real(double x, int d);

// Sorted (ascending) eigenvalues of the flattened matrix, via its symmetric form.
std::vector<double> empirical_spectrum(const SymTensor& t, const CriticalPoint& cp);

// sup_x |F_n(x) - F(x)| where F_n is the empirical CDF of `sample`. The
// supremum is attained at sample points, using F and its left limit there.
double ks_distance(std::span<const double> sample, const std::function<double(double)>& cdf,
                   const std::function<double(double)>& cdf_left = {});
double ks_distance(std::span<const double> sample, const SpectralLimit& lim);

}  // namespace spiked
