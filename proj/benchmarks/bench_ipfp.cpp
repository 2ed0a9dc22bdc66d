#include <benchmark/benchmark.h>

#include <random>

#include "bipfit/ipfp_engine.hpp"

using namespace bipfit;

namespace {

// Dense positive seed with uniform marginals: fast, geometric convergence.
FittingProblem dense_problem(Index n) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.5, 1.5);
  Matrix x(n, n);
  for (double& v : x.data()) v = u(rng);
  const std::vector<double> uniform(n, 1.0 / double(n));
  return FittingProblem(x, Marginals(uniform), Marginals(uniform));
}

void BM_IteratorStep(benchmark::State& state) {
  const FittingProblem p = dense_problem(state.range(0));
  IpfpIterator it(p);
  for (auto _ : state) {
    it.step();
    benchmark::DoNotOptimize(it.current());
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_IteratorStep)->RangeMultiplier(4)->Range(4, 256);

void BM_RunToConvergence(benchmark::State& state) {
  const FittingProblem p = dense_problem(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(run(p));
}
BENCHMARK(BM_RunToConvergence)->RangeMultiplier(4)->Range(4, 64)->Unit(benchmark::kMillisecond);

void BM_PMatrix(benchmark::State& state) {
  const FittingProblem p = dense_problem(state.range(0));
  const NonNegMatrix x = t_c(p.x0(), p.b());
  for (auto _ : state) benchmark::DoNotOptimize(p_matrix(x, p.a(), p.b()));
}
BENCHMARK(BM_PMatrix)->RangeMultiplier(4)->Range(4, 64);

}  // namespace
