// Serial references vs OpenMP kernels.
//
//   ./granule_bench --benchmark_filter=Generate
//   OMP_NUM_THREADS=8 ./granule_bench

#include <benchmark/benchmark.h>

#include "granule/ballgen.hpp"
#include "granule/kernels.hpp"
#include "granule/noise.hpp"

namespace {

granule::Dataset noisy_blobs(std::size_t per_class, double rate) {
  granule::SynthSpec spec;
  spec.classes = 10;
  spec.per_class = per_class;
  spec.dim = 16;
  spec.separation = 4.0;
  spec.seed = 11;
  granule::NoiseSpec noise;
  noise.rate = rate;
  noise.seed = 12;
  return granule::inject(granule::synthesize(spec), noise).data;
}

granule::Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  granule::Matrix m(rows, cols);
  granule::Rng rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (double& v : m.values()) v = u(rng);
  return m;
}

void BM_GenerateSerial(benchmark::State& state) {
  const auto data = noisy_blobs(static_cast<std::size_t>(state.range(0)), 0.3);
  granule::SplitConfig cfg;
  for (auto _ : state) {
    benchmark::DoNotOptimize(granule::serial::generate(data.features, data.labels, cfg));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(data.size()));
}

void BM_GenerateParallel(benchmark::State& state) {
  const auto data = noisy_blobs(static_cast<std::size_t>(state.range(0)), 0.3);
  granule::SplitConfig cfg;
  for (auto _ : state) {
    benchmark::DoNotOptimize(granule::generate(data.features, data.labels, cfg));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(data.size()));
}

void BM_MatmulNtSerial(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_matrix(n, 64, 1);
  const auto b = random_matrix(64, 64, 2);
  for (auto _ : state) benchmark::DoNotOptimize(granule::kernels::serial::matmul_nt(a, b));
}

void BM_MatmulNtParallel(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_matrix(n, 64, 1);
  const auto b = random_matrix(64, 64, 2);
  for (auto _ : state) benchmark::DoNotOptimize(granule::kernels::matmul_nt(a, b));
}

void BM_MatmulTnSerial(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_matrix(n, 64, 3);
  const auto b = random_matrix(n, 64, 4);
  for (auto _ : state) benchmark::DoNotOptimize(granule::kernels::serial::matmul_tn(a, b));
}

void BM_MatmulTnParallel(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_matrix(n, 64, 3);
  const auto b = random_matrix(n, 64, 4);
  for (auto _ : state) benchmark::DoNotOptimize(granule::kernels::matmul_tn(a, b));
}

}  // namespace

BENCHMARK(BM_GenerateSerial)->Arg(50)->Arg(200)->Arg(500)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GenerateParallel)->Arg(50)->Arg(200)->Arg(500)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MatmulNtSerial)->Arg(256)->Arg(1024)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_MatmulNtParallel)->Arg(256)->Arg(1024)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_MatmulTnSerial)->Arg(256)->Arg(1024)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_MatmulTnParallel)->Arg(256)->Arg(1024)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
