#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "bipfit/ipfp_engine.hpp"
#include "bipfit/stochastic_products.hpp"
#include "bipfit/structure_analysis.hpp"
#include "test_util.hpp"

using namespace bipfit;

namespace {

std::vector<double> random_vector(Index d, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(d);
  for (double& x : v) x = u(rng);
  return v;
}

Matrix random_stochastic(Index rows, Index cols, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    double s = 0;
    for (Index j = 0; j < cols; ++j) s += m(i, j) = u(rng);
    for (Index j = 0; j < cols; ++j) m(i, j) /= s;
  }
  return m;
}

}  // namespace

TEST(StochasticMatrix, RejectsBadRows) {
  EXPECT_THROW(StochasticMatrix(Matrix{{0.5, 0.4}, {0.5, 0.5}}), InvalidInput);
  EXPECT_THROW(StochasticMatrix(Matrix{{1.5, -0.5}, {0.5, 0.5}}), InvalidInput);
  EXPECT_THROW(StochasticMatrix(Matrix{{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}}), InvalidInput);
}

TEST(Dispersion, HandValues) {
  EXPECT_EQ(dispersion(std::vector<double>{3, 3, 3}), 0.0);
  EXPECT_EQ(dispersion(std::vector<double>{0, 1}), 2.0);
  EXPECT_EQ(dispersion(std::vector<double>{1, 2, 4}), 12.0);
}

TEST(Dispersion, MatchesPairwiseSum) {
  std::mt19937_64 rng(testutil::seed());
  for (int trial = 0; trial < 100; ++trial) {
    const auto v = random_vector(7, rng);
    EXPECT_NEAR(dispersion(v), oracle::dispersion(v), 1e-12);
  }
}

TEST(AssumptionCheck, RhoConventions) {
  const std::vector<StochasticMatrix> id{StochasticMatrix(Matrix::identity(3))};
  const AssumptionCheck a = check_assumptions(id);
  EXPECT_EQ(a.gamma, 1.0);
  EXPECT_EQ(a.rho, 1.0);  // every off-diagonal pair is 0/0
  EXPECT_TRUE(a.doubly_stochastic);

  const std::vector<StochasticMatrix> t{t0_matrix()};
  const AssumptionCheck b = check_assumptions(t);
  EXPECT_EQ(b.rho, std::numeric_limits<double>::infinity());
  EXPECT_FALSE(b.holds());
  EXPECT_FALSE(b.doubly_stochastic);
}

TEST(DiameterContraction, MrFamilyIsTight) {
  for (double r : {0.0, 0.3, 0.9}) {
    const std::vector<double> v{0, 1};
    const DiameterBounds d = check_diameter_contraction(mr_matrix(r).matrix(), v);
    EXPECT_NEAR(d.diam_slack, 0.0, 1e-15);
  }
}

TEST(DiameterContraction, ZeroEntryDegeneratesToNonExpansion) {
  const Matrix m{{1, 0}, {0.3, 0.7}};
  const std::vector<double> v{-1, 2};
  const DiameterBounds d = check_diameter_contraction(m, v);
  EXPECT_GE(d.diam_slack, 0.0);
}

TEST(DiameterContraction, RandomRectangularTrials) {
  std::mt19937_64 rng(testutil::seed() + 1);
  for (int trial = 0; trial < 1000; ++trial) {
    const Matrix m = random_stochastic(5, 5 + trial % 3, rng);
    const auto v = random_vector(m.cols(), rng);
    const DiameterBounds d = check_diameter_contraction(m, v);
    EXPECT_GE(std::min({d.min_slack, d.max_slack, d.diam_slack}), -1e-12);
  }
}

TEST(DiameterContraction, ReportsViolations) {
  // Not stochastic: rejected as a precondition.
  const std::vector<double> v{0, 1};
  EXPECT_THROW(check_diameter_contraction(Matrix{{2, 0}, {0, 1}}, v), PreconditionViolation);
}

TEST(DispersionDecrease, IdentityAndAveraging) {
  const std::vector<double> v{0, 1};
  EXPECT_NEAR(check_dispersion_decrease(StochasticMatrix(Matrix::identity(2)), v, 1.0), 0.0,
              1e-15);
  // D(V) = 2, D(MV) = 0, ||MV - V||_1 = 1: slack 2 - 0 - 1/2.
  EXPECT_NEAR(check_dispersion_decrease(StochasticMatrix(Matrix{{.5, .5}, {.5, .5}}), v, 0.5),
              1.5, 1e-15);
}

TEST(DispersionDecrease, Preconditions) {
  const std::vector<double> v{0, 1, 2};
  EXPECT_THROW(check_dispersion_decrease(t0_matrix(), v, 0.0), PreconditionViolation);
  const std::vector<double> w{0, 1};
  EXPECT_THROW(check_dispersion_decrease(mr_matrix(0.5), w, 0.9), PreconditionViolation);
}

TEST(SortedPartialSums, TrivialCases) {
  std::mt19937_64 rng(testutil::seed() + 2);
  const auto v = random_vector(4, rng);
  const StochasticMatrix id(Matrix::identity(4));
  for (Index k = 1; k <= 4; ++k) EXPECT_NEAR(check_sorted_partial_sums(id, v, k), 0.0, 1e-15);
  const StochasticMatrix m = random_birkhoff(4, 4, 0.2, rng);
  EXPECT_NEAR(check_sorted_partial_sums(m, v, 4), 0.0, 1e-14);
  EXPECT_THROW(check_sorted_partial_sums(m, v, 0), PreconditionViolation);
  EXPECT_THROW(check_sorted_partial_sums(m, v, 5), PreconditionViolation);
}

TEST(OrbitBounds, RandomDoublyStochasticTrials) {
  std::mt19937_64 rng(testutil::seed() + 3);
  std::uniform_real_distribution<double> g(0.0, 0.5);
  for (int trial = 0; trial < 1000; ++trial) {
    const Index d = 2 + trial % 6;
    const double gamma = g(rng);
    const StochasticMatrix m = random_birkhoff(d, d + trial % 3, gamma, rng);
    const auto v = random_vector(d, rng);
    EXPECT_GE(check_dispersion_decrease(m, v, gamma), -1e-12);
    for (Index k = 1; k <= d; ++k) EXPECT_GE(check_sorted_partial_sums(m, v, k), -1e-12);
  }
}

TEST(Generators, BirkhoffAndReversibleSatisfyAssumptions) {
  std::mt19937_64 rng(testutil::seed() + 4);
  std::vector<StochasticMatrix> b, r;
  for (int k = 0; k < 50; ++k) {
    b.push_back(random_birkhoff(5, 5, 0.2, rng));
    r.push_back(random_reversible(5, 0.2, rng));
  }
  const AssumptionCheck ab = check_assumptions(b);
  EXPECT_TRUE(ab.doubly_stochastic);
  EXPECT_GE(ab.gamma, 0.2 - 1e-15);
  const AssumptionCheck ar = check_assumptions(r);
  EXPECT_GE(ar.gamma, 0.2 - 1e-15);
  EXPECT_LE(ar.rho, 2.0 + 1e-12);
}

TEST(ProductRun, MrFamilyConvergesToMl) {
  const auto ms = mr_family(mr_geometric_schedule(60));
  const ProductTrace t = product_run(ms);
  const StochasticMatrix expected = mr_matrix(std::exp(-1.0));
  EXPECT_LE(max_abs_diff(t.last(), expected.matrix()), 1e-10);
  EXPECT_GT(t.last().min_entry(), 0.0);
  EXPECT_TRUE(tail_is_cauchy(t));
}

TEST(ProductRun, T0T1Oscillates) {
  const ProductTrace t = product_run(t0t1_alternating(300));
  EXPECT_EQ(t.assumptions.rho, std::numeric_limits<double>::infinity());
  EXPECT_FALSE(tail_is_cauchy(t));
  // Variation grows linearly: the last third carries about a third of it.
  EXPECT_GT(t.tail_variation(), 0.25 * t.variation_sum);
  EXPECT_THROW(offdiag_convergence_report(t, t.last()), PreconditionViolation);
}

TEST(ProductRun, DispersionNonIncreasingForDoublyStochastic) {
  std::mt19937_64 rng(testutil::seed() + 5);
  std::vector<StochasticMatrix> ms;
  for (int k = 0; k < 200; ++k) ms.push_back(random_birkhoff(4, 4, 0.2, rng));
  const std::vector<std::vector<double>> vs{random_vector(4, rng), random_vector(4, rng)};
  const ProductTrace t = product_run(ms, vs);
  for (Index v = 0; v < vs.size(); ++v) {
    const auto& h = t.dispersion_history[v];
    ASSERT_EQ(h.size(), 201u);
    std::vector<double> x = vs[v];
    for (Index n = 0; n < ms.size(); ++n) {
      const auto y = ms[n].matrix() * x;
      EXPECT_LE(h[n + 1], h[n] + 1e-12);
      EXPECT_GE(h[n] - h[n + 1], 0.2 * l1_distance(y, x) - 1e-12);
      x = y;
    }
  }
}

TEST(ProductRun, DimensionMismatch) {
  const std::vector<StochasticMatrix> ms{mr_matrix(0.5), t0_matrix()};
  EXPECT_THROW(product_run(ms), DimensionMismatch);
}

TEST(OffdiagReport, IdentityRowsNeverMix) {
  const std::vector<StochasticMatrix> ms(10, StochasticMatrix(Matrix::identity(3)));
  const ProductTrace t = product_run(ms);
  const auto pairs = offdiag_convergence_report(t, t.last());
  ASSERT_EQ(pairs.size(), 3u);
  for (const auto& p : pairs) {
    EXPECT_NEAR(p.row_distance, 2.0, 1e-15);
    EXPECT_EQ(p.sum_ij + p.sum_ji, 0.0);
    EXPECT_TRUE(p.bounded);
  }
}

TEST(OffdiagReport, ConsensusLimitHasNoPairs) {
  const ProductTrace t = product_run(mr_family(std::vector<double>(40, 0.0)));
  EXPECT_TRUE(offdiag_convergence_report(t, t.last()).empty());
}

TEST(OffdiagReport, BlockDiagonalConsensusBlocks) {
  const Matrix m{{.5, .5, 0, 0}, {.5, .5, 0, 0}, {0, 0, .5, .5}, {0, 0, .5, .5}};
  const std::vector<StochasticMatrix> ms(12, StochasticMatrix(m));
  const ProductTrace t = product_run(ms);
  const auto pairs = offdiag_convergence_report(t, t.last());
  ASSERT_EQ(pairs.size(), 4u);
  for (const auto& p : pairs) {
    EXPECT_EQ(p.sum_ij, 0.0);
    EXPECT_EQ(p.sum_ji, 0.0);
    EXPECT_TRUE(p.bounded);
  }
}

TEST(OffdiagReport, IpfpHarvestedSequenceOn5x6Example) {
  const FittingProblem problem(Matrix{{1, 1, 0, 0, 0, 0},
                                      {0, 1, 1, 0, 0, 0},
                                      {0, 1, 1, 1, 0, 0},
                                      {1, 1, 1, 1, 0, 1},
                                      {1, 0, 1, 1, 1, 1}},
                               Marginals({0.25, 0.25, 0.25, 0.15, 0.10}),
                               Marginals({0.05, 0.05, 0.1, 0.2, 0.2, 0.4}));
  std::vector<StochasticMatrix> ms;
  for (const Matrix& p : p_matrix_sequence(problem, 3000)) ms.push_back(StochasticMatrix(p, 1e-10));
  const AssumptionCheck ac = check_assumptions(ms);
  EXPECT_GT(ac.gamma, 0.0);
  EXPECT_LE(ac.rho, problem.a().max() / problem.a().min() + 1e-9);

  // Steps decay like n^-2 here, so the last third still moves by O(1/n).
  const ProductTrace t = product_run(ms);
  ASSERT_TRUE(tail_is_cauchy(t, 1e-3));
  ASSERT_FALSE(tail_is_cauchy(t, 1e-6));
  const BlockStructure bs = block_structure(problem);
  // Pairs of rows from different blocks have bounded cross sums.
  for (const auto& pr : offdiag_convergence_report(t, t.last(), 1e-3, 1e-3)) {
    if (bs.row_block_of(pr.i) != bs.row_block_of(pr.j)) EXPECT_TRUE(pr.bounded);
  }
}

TEST(FiniteVariation, StabilizesUnderAssumptions) {
  std::mt19937_64 rng(testutil::seed() + 6);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<StochasticMatrix> ms;
    for (int k = 0; k < 2000; ++k) ms.push_back(random_reversible(4, 0.2, rng));
    const ProductTrace t = product_run(ms);
    EXPECT_LE(t.variation_sum - t.variation_up_to(200), 1e-6);
  }
}
