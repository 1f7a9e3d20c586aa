#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "spiked/critical.hpp"
#include "spiked/rng.hpp"
#include "spiked/spectrum.hpp"
#include "spiked/tensor.hpp"

namespace fixture {

using spiked::Matrix;
using spiked::Vector;

inline Vector random_unit(int n, std::uint64_t seed) {
  spiked::CounterRng rng(seed, 7);
  Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = rng.normal();
  return v.normalized();
}

inline Matrix random_matrix(int rows, int cols, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  spiked::CounterRng rng(seed, 8);
  Matrix m(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) m(i, j) = rng.uniform(lo, hi);
  return m;
}

inline Matrix corr2(double rho) {
  Matrix g(2, 2);
  g << 1.0, rho, rho, 1.0;
  return g;
}

inline spiked::SpikeModel two_spikes(int d, int n, double b1, double b2, double rho, std::uint64_t seed) {
  spiked::SpikeModel m;
  m.order = d;
  m.dim = n;
  m.betas = Vector(2);
  m.betas << b1, b2;
  m.us = spiked::correlated_unit_vectors(corr2(rho), n, seed);
  m.seed = seed;
  return m;
}

inline spiked::CriticalPoint point_at_signals(const spiked::SpikeModel& m) {
  spiked::CriticalPoint cp;
  cp.gammas = m.betas;
  cp.vs = m.us;
  return cp;
}

// Eigenvalues of the flattened matrix at two fixed unit vectors with
// <v_1, v_2> = 0.5 and gamma_2 / gamma_1 = 0.4, for T = spikes + noise.
struct Fig1Sample {
  std::vector<double> eigs;
  spiked::SpectralLimit limit;
};

inline Fig1Sample fig1_sample(int d, int n, std::uint64_t seed, const Vector& betas = Vector()) {
  spiked::SpikeModel m;
  m.order = d;
  m.dim = n;
  m.seed = seed;
  m.betas = betas.size() ? betas : Vector::Zero(2);
  m.us = spiked::correlated_unit_vectors(Matrix::Identity(m.betas.size(), m.betas.size()), n,
                                         spiked::derive_seed(seed, 1));
  const spiked::SymTensor t = spiked::build_spiked(m, true);
  spiked::CriticalPoint cp;
  cp.gammas = Vector(2);
  cp.gammas << 1.0, 0.4;
  cp.vs = spiked::correlated_unit_vectors(corr2(0.5), n, spiked::derive_seed(seed, 2));
  return {spiked::empirical_spectrum(t, cp),
          spiked::kappa_spectrum(spiked::weight_matrix(spiked::gram(cp.vs), cp.gammas, d), d)};
}

}  // namespace fixture
