#include <benchmark/benchmark.h>

#include <random>

#include "bipfit/stochastic_products.hpp"

using namespace bipfit;

namespace {

void BM_ProductRun(benchmark::State& state) {
  std::mt19937_64 rng(3);
  std::vector<StochasticMatrix> ms;
  for (Index k = 0; k < Index(state.range(0)); ++k) ms.push_back(random_reversible(5, 0.2, rng));
  for (auto _ : state) benchmark::DoNotOptimize(product_run(ms));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ProductRun)->RangeMultiplier(10)->Range(100, 10'000)->Unit(benchmark::kMillisecond);

void BM_Dispersion(benchmark::State& state) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(state.range(0));
  for (double& x : v) x = u(rng);
  for (auto _ : state) benchmark::DoNotOptimize(dispersion(v));
}
BENCHMARK(BM_Dispersion)->RangeMultiplier(8)->Range(8, 4096);

}  // namespace
