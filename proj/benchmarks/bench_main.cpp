#include <benchmark/benchmark.h>

#include "spiked/alignments.hpp"
#include "spiked/critical.hpp"
#include "spiked/inference.hpp"
#include "spiked/spectrum.hpp"
#include "spiked/tensor.hpp"

using namespace spiked;

namespace {

SpikeModel two_spikes(int d, int n) {
  Matrix c(2, 2);
  c << 1.0, 0.7, 0.7, 1.0;
  SpikeModel m;
  m.order = d;
  m.dim = n;
  m.betas = Vector::Constant(2, 10.0);
  m.us = correlated_unit_vectors(c, n, 1);
  m.seed = 2;
  return m;
}

void BM_SampleNoise(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(sample_noise(n, 3, ++seed));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(multiset_count(n, 3)));
}
BENCHMARK(BM_SampleNoise)->Arg(50)->Arg(100)->Arg(150);

void BM_ContractVectors(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const SymTensor t = sample_noise(n, 3, 1);
  const Matrix vs = random_orthonormal_frame(n, 2, 3);
  for (auto _ : state) benchmark::DoNotOptimize(contract_vectors(t, vs));
}
BENCHMARK(BM_ContractVectors)->Arg(50)->Arg(100)->Arg(150);

void BM_ContractMatrix(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const SymTensor t = sample_noise(n, 3, 1);
  const Vector v = random_orthonormal_frame(n, 1, 3).col(0);
  for (auto _ : state) benchmark::DoNotOptimize(contract_matrix(t, v));
}
BENCHMARK(BM_ContractMatrix)->Arg(50)->Arg(150);

void BM_FlattenSpectrum(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const SymTensor t = sample_noise(n, 3, 1);
  CriticalPoint cp;
  cp.vs = random_orthonormal_frame(n, 2, 3);
  cp.gammas = Vector::Constant(2, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(empirical_spectrum(t, cp));
}
BENCHMARK(BM_FlattenSpectrum)->Arg(50)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_FindCriticalPoints(benchmark::State& state) {
  const SpikeModel m = two_spikes(3, static_cast<int>(state.range(0)));
  const SymTensor t = build_spiked(m, true);
  CriticalPoint init;
  init.vs = m.us;
  init.gammas = m.betas;
  for (auto _ : state) benchmark::DoNotOptimize(find_critical_points(t, 2, init));
}
BENCHMARK(BM_FindCriticalPoints)->Arg(60)->Arg(150)->Unit(benchmark::kMillisecond);

void BM_SolveAlignment(benchmark::State& state) {
  Matrix c(2, 2);
  c << 1.0, 0.7, 0.7, 1.0;
  const Vector betas = Vector::Constant(2, 10.0);
  for (auto _ : state) benchmark::DoNotOptimize(solve_alignment_system(betas, c, 3, 2));
}
BENCHMARK(BM_SolveAlignment)->Unit(benchmark::kMillisecond);

void BM_PluginRank2(benchmark::State& state) {
  Matrix c(2, 2);
  c << 1.0, 0.7, 0.7, 1.0;
  const Vector betas = Vector::Constant(2, 10.0);
  const AlignmentSolution lim = select_solution(solve_alignment_system(betas, c, 3, 2), betas, c, 3);
  SummaryStats st;
  st.gammas = lim.gammas;
  st.R_vv = lim.R_vv;
  const PluginMatrices pm = plugin_matrices(st, 3);
  for (auto _ : state) benchmark::DoNotOptimize(solve_plugin_rank2(pm));
}
BENCHMARK(BM_PluginRank2);

}  // namespace

BENCHMARK_MAIN();
