#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "spiked/critical.hpp"
#include "spiked/errors.hpp"
#include "spiked/spectrum.hpp"

using namespace spiked;
using fixture::corr2;

namespace {

SpectralLimit rank2_example() {
  Vector g(2);
  g << 1.0, 0.4;
  return kappa_spectrum(weight_matrix(corr2(0.5), g, 3), 3);
}

// Integral of f over [a, b] where f may have square-root behaviour at both
// ends: x = c + h sin(theta) and composite Simpson in theta.
template <class F>
double integrate_edges(F&& f, double a, double b, int n = 4000) {
  const double c = 0.5 * (a + b), h = 0.5 * (b - a);
  const double lo = -std::numbers::pi / 2, step = std::numbers::pi / n;
  double sum = 0.0;
  for (int k = 0; k <= n; ++k) {
    const double th = lo + k * step;
    const double w = (k == 0 || k == n) ? 1.0 : (k % 2 ? 4.0 : 2.0);
    sum += w * f(c + h * std::sin(th)) * h * std::cos(th);
  }
  return sum * step / 3.0;
}

// Piecewise over the breakpoints +-|kappa_i|.
template <class F>
double integrate_support(F&& f, const SpectralLimit& lim) {
  std::vector<double> cuts;
  for (Eigen::Index i = 0; i < lim.kappas.size(); ++i) {
    cuts.push_back(std::abs(lim.kappas[i]));
    cuts.push_back(-std::abs(lim.kappas[i]));
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) total += integrate_edges(f, cuts[i], cuts[i + 1]);
  return total;
}

// Random diagonalizable W of the admissible form H^{-1} diag(gamma_s/gamma_i).
Matrix random_w(int s, std::uint64_t seed) {
  const Matrix frame = random_orthonormal_frame(s + 3, s, seed);
  Matrix vs = frame;
  for (int j = 1; j < s; ++j) vs.col(j) = (frame.col(j) + 0.6 * frame.col(0)).normalized();
  const Matrix u = fixture::random_matrix(s, 1, seed + 1, 0.5, 3.0);
  Vector g = u.col(0);
  std::sort(g.data(), g.data() + g.size(), [](double a, double b) { return a > b; });
  const int d = 3 + static_cast<int>(seed % 3);
  return weight_matrix(gram(vs), g, d);
}

double median(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

}  // namespace

TEST(KappaSpectrum, RankOne) {
  const SpectralLimit lim = kappa_spectrum(Matrix::Ones(1, 1), 3);
  EXPECT_NEAR(lim.kappas[0], 2.0 / std::sqrt(6.0), 1e-15);
  EXPECT_NEAR(lim.kappas[0], 0.816497, 1e-6);
  EXPECT_DOUBLE_EQ(unit_radius(3), 2.0 / std::sqrt(6.0));
}

TEST(KappaSpectrum, RankTwoExampleAndClosedForm) {
  const SpectralLimit lim = rank2_example();
  EXPECT_NEAR(lim.kappas[0], oracle::kKappa1, 1e-10);
  EXPECT_NEAR(lim.kappas[1], oracle::kKappa2, 1e-10);
  const auto cf = rank2_kappas(0.4, 0.25, 3);
  EXPECT_NEAR(cf[0], lim.kappas[0], 1e-10);
  EXPECT_NEAR(cf[1], lim.kappas[1], 1e-10);
}

TEST(KappaSpectrum, ClosedFormMatchesEigensolverAcrossParameters) {
  for (int d : {3, 4, 5}) {
    for (double nu : {0.1, 0.4, 0.9, 1.0}) {
      for (double tau : {-0.6, 0.0, 0.3, 0.8}) {
        Vector g(2);
        g << 1.0, nu;
        const SpectralLimit lim = kappa_spectrum(weight_matrix(corr2(tau), g, d), d);
        const auto cf = rank2_kappas(nu, std::pow(tau, d - 1), d);
        EXPECT_NEAR(cf[0], lim.kappas[0], 1e-10) << d << ' ' << nu << ' ' << tau;
        EXPECT_NEAR(cf[1], lim.kappas[1], 1e-10) << d << ' ' << nu << ' ' << tau;
      }
    }
  }
}

TEST(KappaSpectrum, Reconstruction) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const int s = 1 + static_cast<int>(seed % 4);
    const Matrix w = random_w(s, seed);
    const int d = 3 + static_cast<int>(seed % 3);
    const SpectralLimit lim = kappa_spectrum(w, d);
    const Matrix rec = lim.P * lim.kappas.asDiagonal() * lim.P_inv;
    EXPECT_LT((rec - unit_radius(d) * w).cwiseAbs().maxCoeff(), 1e-10);
    for (int i = 1; i < s; ++i) EXPECT_GE(std::abs(lim.kappas[i - 1]), std::abs(lim.kappas[i]));
  }
}

TEST(KappaSpectrum, RejectsComplexSpectrum) {
  Matrix rot(2, 2);
  rot << 0, 1, -1, 0;
  EXPECT_THROW(kappa_spectrum(rot, 3), HypothesisViolation);
}

TEST(LimitDensity, ShapeAndNormalisation) {
  const SpectralLimit one = kappa_spectrum(Matrix::Ones(1, 1), 3);
  const double c = one.kappas[0];
  EXPECT_NEAR(limit_density(0.0, one), 2.0 / (std::numbers::pi * c), 1e-15);
  const SpectralLimit lim = rank2_example();
  EXPECT_EQ(limit_density(1.5 * lim.radius(), lim), 0.0);
  EXPECT_EQ(limit_density(-1.5 * lim.radius(), lim), 0.0);
  EXPECT_NEAR(integrate_support([&](double x) { return limit_density(x, lim); }, lim), 1.0, 1e-8);
  EXPECT_NEAR(integrate_support([&](double x) { return limit_density(x, one); }, one), 1.0, 1e-8);
}

TEST(LimitCdf, MonotoneWithCorrectEnds) {
  const SpectralLimit lim = rank2_example();
  const double r = lim.radius();
  EXPECT_EQ(limit_cdf(-r - 1e-9, lim), 0.0);
  EXPECT_EQ(limit_cdf(r + 1e-9, lim), 1.0);
  EXPECT_NEAR(limit_cdf(0.0, lim), 0.5, 1e-15);
  double prev = 0.0;
  for (int k = 0; k <= 1000; ++k) {
    const double x = -1.1 * r + 2.2 * r * k / 1000.0;
    const double f = limit_cdf(x, lim);
    EXPECT_GE(f, prev);
    prev = f;
  }
  // CDF is the integral of the density.
  const double x0 = 0.2;
  const double part = integrate_edges([&](double x) { return limit_density(x, lim); }, -std::abs(lim.kappas[1]), x0) +
                      integrate_edges([&](double x) { return limit_density(x, lim); }, -r, -std::abs(lim.kappas[1]));
  EXPECT_NEAR(limit_cdf(x0, lim), part, 1e-7);
}

TEST(Zeta, ZeroKappaAndBranch) {
  // Runtime operands, so both sides go through the same complex division.
  volatile double re = 0.3, im = 0.7;
  const Complex z(re, im);
  EXPECT_EQ(zeta(z, 0.0), -1.0 / z);
  CounterRng rng(3);
  for (int k = 0; k < 1000; ++k) {
    const Complex w(rng.uniform(-3, 3), std::pow(10.0, rng.uniform(-6, 1)));
    const double kappa = rng.uniform(-2, 2);
    const Complex zv = zeta(w, kappa);
    EXPECT_GT(zv.imag(), 0.0) << w << ' ' << kappa;
    // Root of (kappa^2 / 4) zeta^2 + z zeta + 1 = 0.
    EXPECT_LT(std::abs(0.25 * kappa * kappa * zv * zv + w * zv + 1.0), 1e-8 * (1.0 + std::abs(w * zv)));
  }
}

TEST(Zeta, RealBranchIsUpperHalfPlaneLimit) {
  for (double x : {1.0, 1.7, -1.2, 5.0}) {
    const double kappa = 0.9;
    EXPECT_NEAR(zeta_real(x, kappa), zeta(Complex(x, 1e-12), kappa).real(), 1e-9);
  }
  EXPECT_THROW(zeta_real(0.5, 0.9), HypothesisViolation);
  EXPECT_NEAR(zeta_real(0.9, 0.9), -2.0 / 0.9, 1e-12);
}

TEST(StieltjesMatrix, Asymptotics) {
  const SpectralLimit lim = rank2_example();
  const Complex z(1e6, 1e6);
  const CMatrix g = stieltjes_matrix(z, lim);
  const CMatrix expected = -CMatrix::Identity(2, 2) / z;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) EXPECT_LE(std::abs(g(i, j) - expected(i, j)), 1e-5 * std::abs(expected(0, 0)));
  EXPECT_THROW(stieltjes_matrix(Complex(0.3, 0.0), lim), HypothesisViolation);
}

TEST(StieltjesMatrix, FixedPointEquation) {
  EXPECT_LT(fixed_point_residual(Complex(0.3, 0.7), rank2_example()), 1e-10);
  CounterRng rng(9);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const int d = 3 + static_cast<int>(seed % 3);
    const SpectralLimit lim = kappa_spectrum(random_w(1 + static_cast<int>(seed % 4), seed), d);
    const Complex z(rng.uniform(-2, 2), rng.uniform(0.01, 2) * (seed % 2 ? 1 : -1));
    EXPECT_LT(fixed_point_residual(z, lim), 1e-10) << "seed " << seed;
  }
}

TEST(StieltjesMatrix, PerronInversionRecoversDensity) {
  const SpectralLimit lim = rank2_example();
  const double r = lim.radius();
  for (int k = 1; k < 100; ++k) {
    const double x = -r + 2.0 * r * k / 100.0;
    const CMatrix g = stieltjes_matrix(Complex(x, 1e-4), lim);
    const double dens = g.trace().imag() / (std::numbers::pi * lim.size());
    EXPECT_NEAR(dens, limit_density(x, lim), 5e-3) << x;
  }
}

TEST(StieltjesMatrix, RealBranchOutsideSupport) {
  const SpectralLimit lim = rank2_example();
  const double x = 1.3 * lim.radius();
  const Matrix gr = stieltjes_matrix_real(x, lim);
  const CMatrix gc = stieltjes_matrix(Complex(x, 1e-12), lim);
  EXPECT_LT((gr - gc.real()).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_THROW(stieltjes_matrix_real(0.5 * lim.radius(), lim), HypothesisViolation);
}

TEST(G1, EdgeAndInteriorValues) {
  EXPECT_NEAR(g1_real(2.0 / std::sqrt(6.0), 3), -std::sqrt(6.0), 1e-12);
  EXPECT_NEAR(g1_real(2.0 / std::sqrt(12.0), 4), -std::sqrt(12.0), 1e-12);
  EXPECT_NEAR(g1_real(3.0, 3), oracle::kG1AtThreeD3, 1e-14);
  EXPECT_NEAR(g1_real(3.0, 3), -0.339, 1e-3);
  EXPECT_THROW(g1_real(0.5, 3), HypothesisViolation);
  // Stieltjes transform of the density: int rho(t) / (t - z) dt.
  const SpectralLimit one = kappa_spectrum(Matrix::Ones(1, 1), 3);
  const double quad = integrate_support([&](double t) { return limit_density(t, one) / (t - 3.0); }, one);
  EXPECT_NEAR(quad, oracle::kG1AtThreeD3, 1e-9);
}

TEST(G1, MatchesRankOneStieltjesMatrix) {
  for (int d : {3, 4, 6}) {
    const SpectralLimit one = kappa_spectrum(Matrix::Ones(1, 1), d);
    for (const Complex z : {Complex(0.3, 0.7), Complex(-1.0, 0.01), Complex(2.0, -0.5)}) {
      EXPECT_LT(std::abs(g1(z, d) - stieltjes_matrix(z, one)(0, 0)), 1e-12);
    }
  }
}

TEST(KsDistance, BasicValues) {
  const std::vector<double> single{0.0};
  const auto uniform = [](double x) { return std::clamp(0.5 * (x + 1.0), 0.0, 1.0); };
  EXPECT_DOUBLE_EQ(ks_distance(single, uniform), 0.5);
  // Against its own step CDF the distance vanishes.
  const std::vector<double> s{-1.0, 0.25, 0.5, 2.0};
  const auto step = [&](double x) {
    return static_cast<double>(std::upper_bound(s.begin(), s.end(), x) - s.begin()) / 4.0;
  };
  const auto step_left = [&](double x) {
    return static_cast<double>(std::lower_bound(s.begin(), s.end(), x) - s.begin()) / 4.0;
  };
  EXPECT_EQ(ks_distance(s, step, step_left), 0.0);
}

TEST(EmpiricalSpectrum, SizeAndOrdering) {
  const auto sample = fixture::fig1_sample(3, 40, 1);
  EXPECT_EQ(sample.eigs.size(), 80u);
  EXPECT_TRUE(std::is_sorted(sample.eigs.begin(), sample.eigs.end()));
}

TEST(EmpiricalSpectrum, PureNoiseMatchesMixtureLaw) {
  const auto sample = fixture::fig1_sample(3, 200, 7);
  EXPECT_LT(ks_distance(sample.eigs, sample.limit), 0.05);
}

TEST(EmpiricalSpectrum, KsDoesNotGrowWithDimension) {
  std::vector<double> small, large;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto a = fixture::fig1_sample(3, 100, 500 + seed);
    small.push_back(ks_distance(a.eigs, a.limit));
    const auto b = fixture::fig1_sample(3, 200, 600 + seed);
    large.push_back(ks_distance(b.eigs, b.limit));
  }
  EXPECT_LE(median(large), median(small));
}

TEST(EmpiricalSpectrum, SpikesLeaveTheBulkUnchanged) {
  Vector betas(2);
  betas << 2.0, 1.0;
  const auto sample = fixture::fig1_sample(3, 150, 3, betas);
  std::vector<double> bulk = sample.eigs;
  // Drop the r^2 = 4 largest-magnitude outliers.
  for (int k = 0; k < 4; ++k) {
    const auto it = std::max_element(bulk.begin(), bulk.end(),
                                     [](double a, double b) { return std::abs(a) < std::abs(b); });
    bulk.erase(it);
  }
  EXPECT_LT(ks_distance(bulk, sample.limit), 0.07);
}
