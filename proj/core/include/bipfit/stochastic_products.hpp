#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "bipfit/matrix_core.hpp"

namespace bipfit {

/// Square non-negative matrix whose rows sum to one (within 1e-12).
class StochasticMatrix {
 public:
  explicit StochasticMatrix(Matrix m, double row_tol = 1e-12);

  const Matrix& matrix() const { return m_; }
  Index dim() const { return m_.rows(); }
  double operator()(Index i, Index j) const { return m_(i, j); }
  bool is_doubly_stochastic(double tol = 1e-12) const;

 private:
  Matrix m_;
};

/// gamma = min_{n,i} M_n(i,i); rho = max_{n,i,j} M_n(i,j)/M_n(j,i) with
/// 0/0 = 1 and x/0 = +infinity.
struct AssumptionCheck {
  double gamma = 1.0;
  double rho = 1.0;
  bool doubly_stochastic = true;

  bool holds() const;  // gamma > 0 and rho finite
};

AssumptionCheck check_assumptions(std::span<const StochasticMatrix> ms);

/// D(V) = sum over ordered pairs (i,j) of |V(i) - V(j)|.
double dispersion(std::span<const double> v);

struct DiameterBounds {
  /// min(MV) - [(1 - m) min(V) + m max(V)]
  double min_slack = 0.0;
  /// [m min(V) + (1 - m) max(V)] - max(MV)
  double max_slack = 0.0;
  /// (1 - 2m) diam(V) - diam(MV)
  double diam_slack = 0.0;
};

/// Checks the three bounds for a row-stochastic m (any shape) with m its
/// smallest entry. Throws TheoremViolation naming the pair if a slack falls
/// below -tol.
DiameterBounds check_diameter_contraction(const Matrix& m, std::span<const double> v,
                                          double tol = 1e-12);

/// D(V) - D(MV) - gamma ||MV - V||_1. Requires m doubly stochastic with
/// diagonal >= gamma (PreconditionViolation otherwise).
double check_dispersion_decrease(const StochasticMatrix& m, std::span<const double> v,
                                 double gamma);

/// sum_{i<=k} (MV)^up(i) - sum_{i<=k} V^up(i) for m doubly stochastic and
/// 1 <= k <= d, with ^up meaning sorted ascending.
double check_sorted_partial_sums(const StochasticMatrix& m, std::span<const double> v,
                                 Index k);

struct ProductTrace {
  AssumptionCheck assumptions;
  /// P_n = M_n ... M_1 for n = 1..N.
  std::vector<Matrix> partial_products;
  /// ||P_{n+1} - P_n||_1 (entrywise) for n = 1..N-1.
  std::vector<double> variation_steps;
  double variation_sum = 0.0;
  /// dispersion_history[v][n] = D(P_n V) with n = 0 meaning V itself.
  std::vector<std::vector<double>> dispersion_history;
  /// offdiag_partial_sums[n](i,j) = sum_{m <= n+1} M_m(i,j).
  std::vector<Matrix> offdiag_partial_sums;
  /// Largest row-sum drift of any partial product.
  double max_row_drift = 0.0;

  Index length() const { return partial_products.size(); }
  const Matrix& last() const { return partial_products.back(); }
  /// Variation accumulated over the last third of the sequence.
  double tail_variation() const;
  /// Variation accumulated over steps n < len.
  double variation_up_to(Index len) const;
};

/// Builds the backward products and their bookkeeping. Throws
/// DimensionMismatch on mixed sizes and TheoremViolation when a partial
/// product drifts from row-stochastic by more than 1e-10.
ProductTrace product_run(std::span<const StochasticMatrix> ms,
                         std::span<const std::vector<double>> tracked_vectors = {});

/// True when the tail variation is below tol (the partial products look
/// Cauchy).
bool tail_is_cauchy(const ProductTrace& trace, double tol = 1e-8);

struct OffdiagPair {
  Index i = 0;
  Index j = 0;
  double row_distance = 0.0;  // ||L(i,.) - L(j,.)||_1
  double sum_ij = 0.0;        // sum_m M_m(i,j)
  double sum_ji = 0.0;
  double tail_ij = 0.0;       // growth over the last third
  double tail_ji = 0.0;
  bool bounded = false;
};

/// For every pair of rows of `limit` that differ by more than 1e-6 in L1,
/// the partial sums of M_m(i,j) and M_m(j,i) and whether their last-third
/// growth is negligible. Throws PreconditionViolation if the trace is not
/// Cauchy at cauchy_tol.
std::vector<OffdiagPair> offdiag_convergence_report(const ProductTrace& trace,
                                                    const Matrix& limit,
                                                    double bounded_tol = 1e-6,
                                                    double cauchy_tol = 1e-8);

/// M(r) = (1/2)[[1+r, 1-r], [1-r, 1+r]].
StochasticMatrix mr_matrix(double r);
/// M(r_1), ..., M(r_n).
std::vector<StochasticMatrix> mr_family(std::span<const double> r);
/// r_n = exp(-2^{-n}) for n = 1..count, whose product tends to exp(-1).
std::vector<double> mr_geometric_schedule(Index count);

StochasticMatrix t0_matrix();
StochasticMatrix t1_matrix();
/// T_1, T_0, T_1, T_0, ... (count factors, T_1 applied first).
std::vector<StochasticMatrix> t0t1_alternating(Index count);

/// gamma I + (1 - gamma) S where S averages `permutations` random
/// permutation matrices.
StochasticMatrix random_birkhoff(Index d, Index permutations, double gamma,
                                 std::mt19937_64& rng);

/// gamma I + (1 - gamma) K with K reversible for a random weight vector pi in
/// [1, 2]^d: K(i,j) proportional to W(i,j) pi_j off the diagonal for a random
/// symmetric W with entries in [1, 2] on a random pattern. Satisfies
/// diag >= gamma and rho <= 2.
StochasticMatrix random_reversible(Index d, double gamma, std::mt19937_64& rng,
                                   double density = 0.6);

}  // namespace bipfit
