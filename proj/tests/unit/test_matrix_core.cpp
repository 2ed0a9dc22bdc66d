#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "bipfit/matrix_core.hpp"
#include "test_util.hpp"

using namespace bipfit;

namespace {

NonNegMatrix random_positive(Index p, Index q, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.1, 2.0);
  Matrix m(p, q);
  for (double& v : m.data()) v = u(rng);
  return NonNegMatrix(m).normalized();
}

void expect_near(const Matrix& x, const oracle::Mat& y, double tol) {
  EXPECT_LE(oracle::max_diff(x.to_rows(), y), tol);
}

}  // namespace

TEST(Marginals, RejectsNonPositiveEntries) {
  EXPECT_THROW(Marginals({0.5, 0.0, 0.5}), InvalidInput);
  EXPECT_THROW(Marginals({1.5, -0.5}), InvalidInput);
}

TEST(Marginals, RenormalizesOnlyWithinSumTolerance) {
  const Marginals m({0.5 + 4e-10, 0.5});
  EXPECT_NEAR(m[0] + m[1], 1.0, 1e-15);
  EXPECT_THROW(Marginals({0.5, 0.6}), InvalidInput);
}

TEST(Marginals, MassAndConditional) {
  const Marginals a({0.25, 0.25, 0.25, 0.15, 0.10});
  const IndexSet s{2, 3, 4};
  EXPECT_NEAR(a.mass(s), 0.5, 1e-15);
  const Marginals c = a.conditional(s);
  EXPECT_NEAR(c[0], 0.5, 1e-15);
  EXPECT_NEAR(c[1], 0.3, 1e-15);
  EXPECT_NEAR(c[2], 0.2, 1e-15);
}

TEST(SupportPattern, RejectsEmptyLines) {
  EXPECT_THROW(SupportPattern(2, 2, {true, true, false, false}), InvalidInput);
  EXPECT_THROW(SupportPattern(2, 2, {true, false, true, false}), InvalidInput);
}

TEST(NonNegMatrix, RejectsNegativeAndEmptyLines) {
  EXPECT_THROW(NonNegMatrix(Matrix{{1, -1}, {1, 1}}), InvalidInput);
  EXPECT_THROW(NonNegMatrix(Matrix{{1, 1}, {0, 0}}), InvalidInput);
  EXPECT_THROW(NonNegMatrix(Matrix{{1, 0}, {1, 0}}), InvalidInput);
}

TEST(FittingProblem, NormalizesMassAndZeroesDenormals) {
  const FittingProblem p(Matrix{{2, 1}, {1, 1e-300}}, Marginals({0.5, 0.5}),
                         Marginals({0.5, 0.5}));
  EXPECT_NEAR(p.x0().total(), 1.0, 1e-15);
  EXPECT_FALSE(p.support()(1, 1));
  EXPECT_EQ(p.x0()(1, 1), 0.0);
}

TEST(FittingProblem, DimensionChecks) {
  EXPECT_THROW(FittingProblem(Matrix{{1, 1}, {1, 1}}, Marginals({0.2, 0.3, 0.5}),
                              Marginals({0.5, 0.5})),
               DimensionMismatch);
  EXPECT_THROW(FittingProblem(Matrix{{1, 1}}, Marginals({1.0}), Marginals({0.5, 0.5})),
               InvalidInput);
}

TEST(TR, FixedPointWhenRowsAlreadyFitted) {
  const Marginals a({0.5, 0.5});
  const NonNegMatrix x(Matrix{{0.25, 0.25}, {0.1, 0.4}});
  EXPECT_EQ(t_r(x, a).matrix(), x.matrix());
}

TEST(TR, FastExampleFirstStepByHand) {
  // X0 = (1/4)[[2,1],[1,0]], a = (2/3,1/3): rows scale by 8/9 and 4/3.
  const NonNegMatrix x0(Matrix{{0.5, 0.25}, {0.25, 0}});
  const NonNegMatrix x1 = t_r(x0, Marginals({2.0 / 3, 1.0 / 3}));
  expect_near(x1.matrix(), {{4.0 / 9, 2.0 / 9}, {1.0 / 3, 0}}, 1e-15);
}

TEST(TR, MarginalsAndSupportPreserved) {
  std::mt19937_64 rng(testutil::seed());
  for (int trial = 0; trial < 50; ++trial) {
    Matrix m = random_positive(4, 5, rng).matrix();
    m(1, 2) = 0;
    m(3, 0) = 0;
    const NonNegMatrix x(m);
    const Marginals a({0.1, 0.2, 0.3, 0.4});
    const Marginals b({0.3, 0.1, 0.2, 0.2, 0.2});
    const NonNegMatrix y = t_r(x, a);
    const NonNegMatrix z = t_c(x, b);
    const auto rs = y.matrix().row_sums();
    const auto cs = z.matrix().col_sums();
    for (Index i = 0; i < 4; ++i) EXPECT_NEAR(rs[i], a[i], 1e-12 * a[i]);
    for (Index j = 0; j < 5; ++j) EXPECT_NEAR(cs[j], b[j], 1e-12 * b[j]);
    EXPECT_EQ(y.support(), x.support());
    EXPECT_EQ(z.support(), x.support());
  }
}

TEST(TR, DimensionMismatch) {
  const NonNegMatrix x(Matrix{{1, 1}, {1, 1}});
  EXPECT_THROW(t_r(x, Marginals({0.2, 0.3, 0.5})), DimensionMismatch);
  EXPECT_THROW(t_c(x, Marginals({0.2, 0.3, 0.5})), DimensionMismatch);
}

TEST(RatioVectors, SlowExampleFirstIterate) {
  const NonNegMatrix x1(Matrix{{0.25, 0.25}, {0.5, 0}});
  const Marginals h({0.5, 0.5});
  const RatioVectors rv = ratio_vectors(x1, h, h);
  EXPECT_NEAR(rv.r[0], 1.0, 1e-15);
  EXPECT_NEAR(rv.r[1], 1.0, 1e-15);
  EXPECT_NEAR(rv.c[0], 1.5, 1e-15);
  EXPECT_NEAR(rv.c[1], 0.5, 1e-15);
}

TEST(RatioVectors, OuterProductIsAllOnes) {
  const std::vector<double> a{0.2, 0.8}, b{0.1, 0.6, 0.3};
  const RatioVectors rv = ratio_vectors(NonNegMatrix(Matrix::outer(a, b)), Marginals(a),
                                        Marginals(b));
  for (double r : rv.r) EXPECT_NEAR(r, 1.0, 1e-15);
  for (double c : rv.c) EXPECT_NEAR(c, 1.0, 1e-15);
}

TEST(RatioVectors, WeightedMeanIsOneOnNormalizedMatrices) {
  std::mt19937_64 rng(testutil::seed() + 1);
  const Marginals a({0.1, 0.2, 0.3, 0.4});
  const Marginals b({0.5, 0.25, 0.25});
  for (int trial = 0; trial < 50; ++trial) {
    const RatioVectors rv = ratio_vectors(random_positive(4, 3, rng), a, b);
    double sr = 0, sc = 0;
    for (Index i = 0; i < 4; ++i) sr += a[i] * rv.r[i];
    for (Index j = 0; j < 3; ++j) sc += b[j] * rv.c[j];
    EXPECT_NEAR(sr, 1.0, 1e-13);
    EXPECT_NEAR(sc, 1.0, 1e-13);
  }
}

TEST(KlDivergence, ZeroOnSelfAndInfiniteOffSupport) {
  const NonNegMatrix x(Matrix{{0.25, 0.25}, {0.5, 0}});
  EXPECT_EQ(kl_divergence(x, x), 0.0);
  const NonNegMatrix y(Matrix{{0.25, 0.25}, {0.25, 0.25}});
  EXPECT_EQ(kl_divergence(y, x), std::numeric_limits<double>::infinity());
  EXPECT_TRUE(std::isfinite(kl_divergence(x, y)));
}

TEST(KlDivergence, HandValue) {
  // Y uniform, X columns (1/8, 3/8): D = 1/2 ln 2 + 1/2 ln(2/3) = 1/2 ln(4/3).
  const NonNegMatrix y(Matrix{{0.25, 0.25}, {0.25, 0.25}});
  const NonNegMatrix x(Matrix{{0.125, 0.375}, {0.125, 0.375}});
  EXPECT_NEAR(kl_divergence(y, x), 0.5 * std::log(4.0 / 3.0), 1e-15);
}

TEST(KlDivergence, RequiresNormalizedInputs) {
  const NonNegMatrix y(Matrix{{1, 1}, {1, 1}});
  EXPECT_THROW(kl_divergence(y, y), InvalidInput);
}

TEST(KlDivergence, NonNegativeOnRandomPairs) {
  std::mt19937_64 rng(testutil::seed() + 2);
  for (int trial = 0; trial < 100; ++trial) {
    const NonNegMatrix y = random_positive(3, 4, rng);
    const NonNegMatrix x = random_positive(3, 4, rng);
    EXPECT_GT(kl_divergence(y, x), 0.0);
  }
}

TEST(FS, DiagonalSeedIsGeometricMean) {
  const NonNegMatrix s(Matrix{{0.5, 0}, {0, 0.5}});
  const NonNegMatrix x(Matrix{{0.1, 0.2}, {0.3, 0.4}});
  EXPECT_NEAR(f_s(s, x), std::sqrt(0.1 * 0.4), 1e-15);
}

TEST(FS, MaximizedAtSAndMatchesDivergence) {
  std::mt19937_64 rng(testutil::seed() + 3);
  for (int trial = 0; trial < 100; ++trial) {
    const NonNegMatrix s = random_positive(3, 3, rng);
    const NonNegMatrix x = random_positive(3, 3, rng);
    EXPECT_GE(f_s(s, s), f_s(s, x));
    EXPECT_NEAR(log_f_s(s, s) - log_f_s(s, x), kl_divergence(s, x), 1e-12);
  }
}

TEST(FS, ZeroWhenSupportNotContained) {
  const NonNegMatrix s(Matrix{{0.25, 0.25}, {0.25, 0.25}});
  const NonNegMatrix x(Matrix{{0.5, 0.25}, {0.25, 0}});
  EXPECT_EQ(f_s(s, x), 0.0);
}

TEST(FS, RowFitRatioIndependentOfS) {
  // For X column-fitted and S with row sums a inside Supp(X):
  // F_S(X) / F_S(T_R X) = prod R_i^{a_i} <= 1.
  std::mt19937_64 rng(testutil::seed() + 4);
  const Marginals a({0.2, 0.3, 0.5});
  const Marginals b({0.4, 0.4, 0.2});
  for (int trial = 0; trial < 50; ++trial) {
    const NonNegMatrix x = t_c(random_positive(3, 3, rng), b);
    const RatioVectors rv = ratio_vectors(x, a, b);
    double expected = 0;
    for (Index i = 0; i < 3; ++i) expected += a[i] * std::log(rv.r[i]);
    for (int k = 0; k < 3; ++k) {
      const NonNegMatrix s = t_r(random_positive(3, 3, rng), a);
      const double got = log_f_s(s, x) - log_f_s(s, t_r(x, a));
      EXPECT_NEAR(got, expected, 1e-12);
      EXPECT_LE(got, 1e-15);
    }
  }
}

TEST(L1Error, SlowExampleByHand) {
  const NonNegMatrix x1(Matrix{{0.25, 0.25}, {0.5, 0}});
  const Marginals h({0.5, 0.5});
  EXPECT_NEAR(l1_error(x1, h, h), 0.5, 1e-15);
}

TEST(L1Error, ZeroOnFittedMatrix) {
  const std::vector<double> a{0.3, 0.7}, b{0.6, 0.4};
  EXPECT_NEAR(l1_error(NonNegMatrix(Matrix::outer(a, b)), Marginals(a), Marginals(b)), 0.0,
              1e-16);
}
