#include <benchmark/benchmark.h>

#include <random>

#include "bipfit/structure_analysis.hpp"

using namespace bipfit;

namespace {

// Random sparse pattern with one dense row block forced onto few columns,
// so the instance is infeasible and has a non-trivial block structure.
FittingProblem sparse_problem(Index n) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.5, 1.5);
  std::bernoulli_distribution cell(0.3);
  Matrix x(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j)
      if (i < n / 2 ? j < n / 4 : cell(rng)) x(i, j) = u(rng);
    x(i, i % (n / 4)) = u(rng);
  }
  for (Index j = 0; j < n; ++j) x(n - 1, j) = u(rng);
  const std::vector<double> uniform(n, 1.0 / double(n));
  return FittingProblem(x, Marginals(uniform), Marginals(uniform));
}

// Random sparse pattern containing the diagonal: feasible for uniform
// marginals.
FittingProblem feasible_problem(Index n) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.5, 1.5);
  std::bernoulli_distribution cell(0.2);
  Matrix x(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      if (i == j || cell(rng)) x(i, j) = u(rng);
  const std::vector<double> uniform(n, 1.0 / double(n));
  return FittingProblem(x, Marginals(uniform), Marginals(uniform));
}

void BM_Feasible(benchmark::State& state) {
  const FittingProblem p = sparse_problem(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(feasible(p.a(), p.b(), p.support()));
}
BENCHMARK(BM_Feasible)->RangeMultiplier(2)->Range(8, 128);

void BM_MaximalSupport(benchmark::State& state) {
  const FittingProblem p = feasible_problem(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(maximal_support(p.a(), p.b(), p.support()));
}
BENCHMARK(BM_MaximalSupport)->RangeMultiplier(2)->Range(8, 128);

void BM_BestCause(benchmark::State& state) {
  const FittingProblem p = sparse_problem(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(best_cause(p.a(), p.b(), p.support()));
}
BENCHMARK(BM_BestCause)->DenseRange(8, 16, 4)->Unit(benchmark::kMillisecond);

void BM_LimitPoints(benchmark::State& state) {
  const FittingProblem p = sparse_problem(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(limit_points(p));
}
BENCHMARK(BM_LimitPoints)->DenseRange(8, 16, 4)->Unit(benchmark::kMillisecond);

}  // namespace
