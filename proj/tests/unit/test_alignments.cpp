#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "spiked/alignments.hpp"
#include "spiked/errors.hpp"

using namespace spiked;
using fixture::corr2;

namespace {

Vector vec2(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

std::vector<AlignmentSolution> valid_only(const std::vector<AlignmentSolution>& all) {
  std::vector<AlignmentSolution> out;
  std::copy_if(all.begin(), all.end(), std::back_inserter(out), [](const auto& s) { return s.valid; });
  return out;
}

// s = 1 residual written out as the scalar system
//   sum_k rho_ik beta_k a_k^{d-1} = a_i (gamma + g1/d),  sum_k beta_k a_k^d = gamma + g1/(d-1).
double scalar_system_residual(double gamma, const Vector& a, const Vector& betas, const Matrix& R_uu, int d) {
  const double g = g1_real(gamma / (d - 1), d);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    double lhs = 0.0;
    for (Eigen::Index k = 0; k < a.size(); ++k) lhs += R_uu(i, k) * betas[k] * std::pow(a[k], d - 1);
    worst = std::max(worst, std::abs(lhs - a[i] * (gamma + g / d)));
  }
  double lhs = 0.0;
  for (Eigen::Index k = 0; k < a.size(); ++k) lhs += betas[k] * std::pow(a[k], d);
  return std::max(worst, std::abs(lhs - (gamma + g / (d - 1))));
}

const AlignmentSolution* find_close(const std::vector<AlignmentSolution>& sols, double gamma, double tol) {
  for (const auto& s : sols)
    if (std::abs(s.gammas[0] - gamma) < tol) return &s;
  return nullptr;
}

}  // namespace

TEST(AsymptoticSquaredError, Examples) {
  const Vector b = vec2(2.0, 1.0);
  EXPECT_NEAR(asymptotic_squared_error(b, corr2(0.5), b, corr2(0.5), 3), 0.0, 1e-15);
  EXPECT_DOUBLE_EQ(asymptotic_squared_error(Vector::Constant(1, 3.0), Matrix::Ones(1, 1), Vector::Constant(1, 2.0),
                                            Matrix::Ones(1, 1), 3),
                   5.0);
  EXPECT_NEAR(asymptotic_squared_error(b, corr2(0.5), vec2(1.8, 0.9), corr2(0.3), 3), 1.36252, 1e-12);
}

TEST(GammaBound, RankOneEdge) {
  EXPECT_NEAR(gamma_bound(Vector::Constant(1, 5.0), Matrix::Ones(1, 1), 3), 4.0 / std::sqrt(6.0), 1e-15);
  EXPECT_NEAR(gamma_bound(Vector::Constant(1, 5.0), Matrix::Ones(1, 1), 3), oracle::kRank1GammaEdge, 1e-12);
  EXPECT_NEAR(gamma_bound(Vector::Constant(1, 5.0), Matrix::Ones(1, 1), 4), 2.0 * 3.0 / std::sqrt(12.0), 1e-15);
}

TEST(LimitTerms, InsideSupportIsAHypothesisViolation) {
  EXPECT_THROW(limit_terms(Vector::Constant(1, 1.0), Matrix::Ones(1, 1), 3), HypothesisViolation);
  EXPECT_NO_THROW(limit_terms(Vector::Constant(1, 2.0), Matrix::Ones(1, 1), 3));
}

TEST(AlignmentResidual, ScalarSystemAgreesWithMatrixForm) {
  CounterRng rng(4);
  for (int k = 0; k < 20; ++k) {
    const int d = 3 + k % 2;
    const double rho = rng.uniform(-0.8, 0.8);
    const Vector betas = vec2(rng.uniform(3, 10), rng.uniform(0, 3));
    AlignmentSolution c;
    c.gammas = Vector::Constant(1, rng.uniform(2.0, 12.0));
    c.R_uv = Matrix(2, 1);
    c.R_uv << rng.uniform(-1, 1), rng.uniform(-1, 1);
    c.R_vv = Matrix::Ones(1, 1);
    EXPECT_NEAR(alignment_residual(c, betas, corr2(rho), d),
                scalar_system_residual(c.gammas[0], c.R_uv.col(0), betas, corr2(rho), d), 1e-12);
  }
}

// With no signal the third equation reads gamma + g1(gamma/(d-1))/(d-1) = 0,
// which has no root on the admissible half-line gamma >= (d-1)|kappa|.
TEST(AlignmentResidual, ZeroSignalHasNoAdmissibleRoot) {
  for (int d : {3, 4, 5}) {
    const double edge = (d - 1) * unit_radius(d);
    for (int k = 0; k <= 2000; ++k) {
      const double gamma = edge * (1.0 + 0.01 * k);
      EXPECT_GT(gamma + g1_real(gamma / (d - 1), d) / (d - 1), 0.0) << d << ' ' << gamma;
    }
  }
  const auto sols = solve_alignment_system(Vector::Zero(1), Matrix::Ones(1, 1), 3, 1);
  EXPECT_TRUE(valid_only(sols).empty());
}

TEST(SolveAlignmentSystem, RankOneRoot) {
  const auto sols = valid_only(solve_alignment_system(Vector::Constant(1, 10.0), Matrix::Ones(1, 1), 3, 1));
  ASSERT_EQ(sols.size(), 1u);
  EXPECT_NEAR(sols[0].gammas[0], oracle::kRank1Beta10Gamma, 1e-8);
  EXPECT_NEAR(std::abs(sols[0].R_uv(0, 0)), oracle::kRank1Beta10Alpha, 1e-8);
}

TEST(SolveAlignmentSystem, DeflationStepMatchesRankOne) {
  const auto sols = valid_only(solve_alignment_system(vec2(10.0, 0.0), corr2(0.0), 3, 1));
  const AlignmentSolution* s = find_close(sols, oracle::kRank1Beta10Gamma, 1e-6);
  ASSERT_NE(s, nullptr);
  EXPECT_NEAR(s->gammas[0], oracle::kRank1Beta10Gamma, 1e-8);
  EXPECT_NEAR(std::abs(s->R_uv(0, 0)), oracle::kRank1Beta10Alpha, 1e-8);
  EXPECT_NEAR(s->R_uv(1, 0), 0.0, 1e-8);
}

TEST(SolveAlignmentSystem, EqualOrthogonalSignals) {
  const Vector b = vec2(10.0, 10.0);
  const auto two = valid_only(solve_alignment_system(b, corr2(0.0), 3, 2));
  bool separated = false;
  for (const auto& s : two) {
    const bool diag = std::abs(s.R_uv(0, 1)) < 1e-6 && std::abs(s.R_uv(1, 0)) < 1e-6;
    const bool anti = std::abs(s.R_uv(0, 0)) < 1e-6 && std::abs(s.R_uv(1, 1)) < 1e-6;
    if (diag || anti) {
      separated = true;
      const Matrix a = s.R_uv.cwiseAbs();
      EXPECT_NEAR(a.maxCoeff(), a.rowwise().sum().minCoeff(), 1e-8);
      EXPECT_NEAR(a.maxCoeff(), oracle::kRank1Beta10Alpha, 1e-8);
      EXPECT_NEAR(s.gammas[0], oracle::kRank1Beta10Gamma, 1e-8);
    }
  }
  EXPECT_TRUE(separated);
  // One critical vector correlated with both signals.
  const auto one = valid_only(solve_alignment_system(b, corr2(0.0), 3, 1));
  const AlignmentSolution* mix = find_close(one, oracle::kMixtureGamma, 1e-6);
  ASSERT_NE(mix, nullptr);
  EXPECT_NEAR(mix->gammas[0], oracle::kMixtureGamma, 1e-8);
  EXPECT_NEAR(std::abs(mix->R_uv(0, 0)), oracle::kMixtureAlpha, 1e-8);
  EXPECT_NEAR(std::abs(mix->R_uv(1, 0)), oracle::kMixtureAlpha, 1e-8);
}

TEST(SolveAlignmentSystem, CorrelatedSignals) {
  const Vector b = vec2(10.0, 10.0);
  const auto two = valid_only(solve_alignment_system(b, corr2(0.7), 3, 2));
  const AlignmentSolution* s = find_close(two, oracle::kRho07S2Gamma, 1e-6);
  ASSERT_NE(s, nullptr);
  EXPECT_NEAR(s->gammas[1], oracle::kRho07S2Gamma, 1e-8);
  // gamma_1 = gamma_2, so the labelling of the two critical vectors is arbitrary.
  for (int i = 0; i < 2; ++i) {
    const double a = std::abs(s->R_uv(i, 0)), c = std::abs(s->R_uv(i, 1));
    EXPECT_NEAR(std::max(a, c), oracle::kRho07S2AlphaMain, 1e-8);
    EXPECT_NEAR(std::min(a, c), oracle::kRho07S2AlphaCross, 1e-8);
  }
  EXPECT_NEAR(std::abs(s->R_vv(0, 1)), oracle::kRho07S2Tau, 1e-8);
  const auto one = valid_only(solve_alignment_system(b, corr2(0.7), 3, 1));
  const AlignmentSolution* m = find_close(one, oracle::kRho07S1Gamma, 1e-6);
  ASSERT_NE(m, nullptr);
  EXPECT_NEAR(std::abs(m->R_uv(0, 0)), oracle::kRho07S1Alpha, 1e-8);
  EXPECT_NEAR(std::abs(m->R_uv(1, 0)), oracle::kRho07S1Alpha, 1e-8);
}

TEST(SolveAlignmentSystem, WeakSignalsHaveNoValidSolution) {
  EXPECT_TRUE(valid_only(solve_alignment_system(vec2(0.1, 0.1), corr2(0.0), 3, 2)).empty());
  EXPECT_TRUE(valid_only(solve_alignment_system(vec2(0.1, 0.1), corr2(0.0), 3, 1)).empty());
}

TEST(SolveAlignmentSystem, ValidRootsPassIndependentChecks) {
  struct Case {
    Vector b;
    double rho;
    int d, s;
  };
  const std::vector<Case> cases{{vec2(10, 10), 0.0, 3, 2}, {vec2(10, 10), 0.7, 3, 2}, {vec2(8, 5), 0.3, 3, 2},
                                {vec2(10, 10), 0.0, 3, 1}, {vec2(9, 6), 0.5, 4, 2},  {vec2(9, 6), 0.5, 4, 1}};
  AlignmentOptions opts;
  for (const auto& c : cases) {
    const auto sols = solve_alignment_system(c.b, corr2(c.rho), c.d, c.s, opts);
    for (const auto& s : sols) {
      EXPECT_LT(alignment_residual(s, c.b, corr2(c.rho), c.d), opts.tol);
      if (!s.valid) continue;
      EXPECT_TRUE(is_valid_solution(s, corr2(c.rho), c.d, opts.tol));
      EXPECT_GT(std::abs(s.gammas[s.s() - 1]), gamma_bound(s.gammas, s.R_vv, c.d));
      EXPECT_LE(s.R_uv.cwiseAbs().maxCoeff(), 1.0 + 1e-8);
      EXPECT_LE(s.R_vv.cwiseAbs().maxCoeff(), 1.0 + 1e-8);
    }
    for (std::size_t i = 0; i < sols.size(); ++i)
      for (std::size_t j = 0; j < i; ++j) {
        const double dist = std::max({(sols[i].gammas - sols[j].gammas).cwiseAbs().maxCoeff(),
                                      (sols[i].R_uv - sols[j].R_uv).cwiseAbs().maxCoeff(),
                                      (sols[i].R_vv - sols[j].R_vv).cwiseAbs().maxCoeff()});
        EXPECT_GT(dist, opts.dedup_tol);
      }
  }
}

TEST(SolveAlignmentSystem, DeterministicForASeed) {
  AlignmentOptions opts;
  opts.seed = 3;
  const auto a = solve_alignment_system(vec2(8, 5), corr2(0.3), 3, 2, opts);
  const auto b = solve_alignment_system(vec2(8, 5), corr2(0.3), 3, 2, opts);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].gammas, b[i].gammas);
    EXPECT_EQ(a[i].R_uv, b[i].R_uv);
  }
}

TEST(SolveAlignmentSystem, SignalPermutationEquivariance) {
  const Vector b = vec2(9.0, 9.0);
  const Matrix ruu = corr2(0.3);
  const auto sols = valid_only(solve_alignment_system(b, ruu, 3, 2));
  ASSERT_FALSE(sols.empty());
  for (const auto& s : sols) {
    AlignmentSolution swapped = s;
    swapped.R_uv.row(0) = s.R_uv.row(1);
    swapped.R_uv.row(1) = s.R_uv.row(0);
    EXPECT_LT(alignment_residual(swapped, b, ruu, 3), 1e-8);
    bool present = false;
    for (const auto& t : sols) {
      const bool same_cols = (t.gammas - swapped.gammas).cwiseAbs().maxCoeff() < 1e-8 &&
                             (t.R_uv - swapped.R_uv).cwiseAbs().maxCoeff() < 1e-8;
      Matrix cols = swapped.R_uv;
      cols.col(0).swap(cols.col(1));
      const bool swapped_cols = std::abs(t.gammas[0] - t.gammas[1]) < 1e-8 &&
                                (t.gammas - swapped.gammas).cwiseAbs().maxCoeff() < 1e-8 &&
                                (t.R_uv - cols).cwiseAbs().maxCoeff() < 1e-8;
      present = present || same_cols || swapped_cols;
    }
    EXPECT_TRUE(present);
  }
}

TEST(SolveAlignmentSystem, OneAndTwoVectorClassesCoincideForStrongSignals) {
  const Vector b = vec2(12.0, 11.0);
  const auto one = valid_only(solve_alignment_system(b, corr2(0.0), 3, 1));
  const auto two = valid_only(solve_alignment_system(b, corr2(0.0), 3, 2));
  bool matched = false;
  for (const auto& a : one) {
    for (const auto& s : two) {
      matched = matched || (std::abs(a.gammas[0] - s.gammas[0]) < 1e-3 &&
                            std::abs(a.R_uv(0, 0) - s.R_uv(0, 0)) < 1e-3 &&
                            std::abs(a.R_uv(1, 0) - s.R_uv(1, 0)) < 1e-3);
    }
  }
  EXPECT_TRUE(matched);
}

TEST(SelectSolution, Rules) {
  const Vector b = vec2(10.0, 10.0);
  const auto sols = solve_alignment_system(b, corr2(0.0), 3, 2);
  const auto valid = valid_only(sols);
  ASSERT_FALSE(valid.empty());
  const AlignmentSolution best = select_solution(sols, b, corr2(0.0), 3);
  // Signal-separated: each critical vector sees exactly one signal (labels may swap).
  EXPECT_NEAR(std::min(std::abs(best.R_uv(0, 0)), std::abs(best.R_uv(0, 1))), 0.0, 1e-6);
  EXPECT_NEAR(std::min(std::abs(best.R_uv(1, 0)), std::abs(best.R_uv(1, 1))), 0.0, 1e-6);
  for (const auto& s : valid)
    EXPECT_LE(asymptotic_squared_error(b, corr2(0.0), best.gammas, best.R_vv, 3),
              asymptotic_squared_error(b, corr2(0.0), s.gammas, s.R_vv, 3));
  EXPECT_EQ(select_solution({valid[0]}, b, corr2(0.0), 3).gammas, valid[0].gammas);
  AlignmentSolution bad = valid[0];
  bad.valid = false;
  EXPECT_THROW(select_solution({bad}, b, corr2(0.0), 3), InvalidArgument);
  EXPECT_THROW(select_solution({}, b, corr2(0.0), 3), InvalidArgument);
}

TEST(DetectionThreshold, RankOneEdge) {
  const ThresholdResult t =
      detection_threshold(Matrix::Ones(1, 1), 3, 1, Vector::Ones(1), 0.5, 4.0, 1e-4);
  EXPECT_NEAR(t.value, oracle::kRank1BetaCritical, 2e-3);
  const auto above = valid_only(solve_alignment_system(Vector::Constant(1, t.upper), Matrix::Ones(1, 1), 3, 1));
  ASSERT_FALSE(above.empty());
  EXPECT_GE(above[0].gammas[0], 4.0 / std::sqrt(6.0));
}

TEST(DetectionThreshold, CorrelationMovesTheThreshold) {
  const Vector dir = vec2(1.0, 1.0).normalized();
  const double tol = 1e-3;
  const ThresholdResult t0 = detection_threshold(corr2(0.0), 3, 2, dir, 0.5, 8.0, tol);
  const ThresholdResult t7 = detection_threshold(corr2(0.7), 3, 2, dir, 0.5, 8.0, tol);
  EXPECT_GT(std::abs(t0.value - t7.value), 0.1);
  for (const auto& t : {t0, t7}) {
    EXPECT_LE(t.upper - t.lower, tol * (t.upper + t.lower));
    EXPECT_GT(t.evaluations, 2);
  }
}

TEST(DetectionThreshold, Monotone) {
  const std::vector<std::pair<double, double>> configs{{0.0, 1.8}, {0.3, 2.2}, {0.7, 3.0}, {0.5, 4.0}, {0.0, 5.0}};
  for (const auto& [rho, c] : configs) {
    const Vector dir = vec2(1.0, 0.6).normalized();
    if (has_valid_solution(c * dir, corr2(rho), 3, 2, {}))
      EXPECT_TRUE(has_valid_solution(2.0 * c * dir, corr2(rho), 3, 2, {})) << rho << ' ' << c;
  }
}

TEST(DetectionThreshold, BracketMustStraddle) {
  EXPECT_THROW(detection_threshold(Matrix::Ones(1, 1), 3, 1, Vector::Ones(1), 3.0, 4.0, 1e-3), BracketError);
  EXPECT_THROW(detection_threshold(Matrix::Ones(1, 1), 3, 1, Vector::Ones(1), 0.1, 0.2, 1e-3), BracketError);
  EXPECT_THROW(detection_threshold(Matrix::Ones(1, 1), 3, 1, Vector::Ones(1), 2.0, 1.0, 1e-3), BracketError);
}
