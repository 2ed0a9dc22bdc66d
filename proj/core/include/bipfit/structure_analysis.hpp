#pragma once

#include <optional>
#include <string_view>
#include <variant>
#include <vector>

#include "bipfit/ipfp_engine.hpp"
#include "bipfit/matrix_core.hpp"

namespace bipfit {

enum class CauseKind { Incompatibility, Criticality };

std::string_view to_string(CauseKind kind);

/// A zero block A x B of the seed with a(A) > b(B^c) (incompatibility) or
/// a(A) = b(B^c) (criticality).
struct Cause {
  IndexSet rows;  // A, sorted
  IndexSet cols;  // B, sorted
  CauseKind kind = CauseKind::Incompatibility;
  /// a(A) / b(B^c).
  double ratio = 0.0;
  /// a(A) - b(B^c).
  double margin = 0.0;
};

/// Recomputes the cause from scratch and throws TheoremViolation if the block
/// is not null in `supp` or the sign of a(A) - b(B^c) disagrees with `kind`.
void verify_cause(const Cause& cause, const Marginals& a, const Marginals& b,
                  const SupportPattern& supp);

/// Builds the cause for block rows x cols with its ratio and kind. Returns
/// nullopt when the block is not null or a(A) < b(B^c).
std::optional<Cause> make_cause(IndexSet rows, IndexSet cols, const Marginals& a,
                                const Marginals& b, const SupportPattern& supp);

struct Witness {
  Matrix matrix;  // marginals a, b and support inside the pattern
};

using FeasibilityResult = std::variant<Witness, Cause>;

/// Decides whether some matrix with marginals a, b has support inside supp.
/// Returns a witness matrix, or an incompatibility cause read off a min cut.
FeasibilityResult feasible(const Marginals& a, const Marginals& b,
                           const SupportPattern& supp);

/// Support of S0, the feasible matrix whose support contains that of every
/// feasible matrix. Throws PreconditionViolation on infeasible instances.
SupportPattern maximal_support(const Marginals& a, const Marginals& b,
                               const SupportPattern& supp);

/// Same result, computed as supp minus the union of A^c x B^c over all
/// criticality causes. Exponential in the number of rows (at most 20).
SupportPattern maximal_support_by_enumeration(const Marginals& a, const Marginals& b,
                                              const SupportPattern& supp);

enum class Behavior { FastConvergence, SlowConvergence, Divergence };

std::string_view to_string(Behavior behavior);

struct Classification {
  Behavior behavior = Behavior::FastConvergence;
  /// Fast/Slow: a feasible matrix and Supp(S0).
  std::optional<Matrix> feasible_matrix;
  std::optional<SupportPattern> maximal_support;
  /// Divergence: the incompatibility certificate.
  std::optional<Cause> cause;
  /// The certificate margin |a(A) - b(B^c)| is below tol::kIllConditioned.
  bool ill_conditioned = false;
};

Classification classify(const FittingProblem& problem);

/// Maximum row count accepted by the subset enumerations.
inline constexpr Index kMaxEnumeratedRows = 25;

/// Among incompatibility causes maximizing a(A)/b(B^c), the one with the
/// largest A (and so the smallest B). B is always B(A), the set of columns
/// null on all of A. Throws PreconditionViolation on feasible instances and
/// TheoremViolation if the ratio maximizers are not nested.
Cause best_cause(const Marginals& a, const Marginals& b, const SupportPattern& supp);

/// Every incompatibility cause A x B(A) (B(A) non-empty), by enumeration.
std::vector<Cause> incompatibility_causes(const Marginals& a, const Marginals& b,
                                          const SupportPattern& supp);

struct BlockStructure {
  Index r = 1;
  std::vector<IndexSet> row_blocks;  // I_1 .. I_r
  std::vector<IndexSet> col_blocks;  // J_1 .. J_r
  std::vector<double> lambdas;       // strictly increasing
  Marginals a_prime;
  Marginals b_prime;
  /// Cause chosen at each of the r - 1 recursion steps, in original indices;
  /// ratio and margin refer to the restricted, renormalized problem.
  std::vector<Cause> step_causes;

  /// k such that row i is in I_k.
  Index row_block_of(Index i) const;
  Index col_block_of(Index j) const;
};

BlockStructure block_structure(const FittingProblem& problem);

struct LimitPair {
  NonNegMatrix even_limit;  // in Gamma(a', b)
  NonNegMatrix odd_limit;   // in Gamma(a, b')
  SupportPattern sigma;
  /// Iterations used by the restarted run on the reduced problem.
  Index iterations = 0;
};

/// The reduced problem: X0 with entries outside sigma zeroed, marginals (a', b).
FittingProblem reduced_problem(const FittingProblem& problem,
                               const BlockStructure& blocks,
                               const SupportPattern& sigma);

LimitPair limit_points(const FittingProblem& problem);
LimitPair limit_points(const FittingProblem& problem, const BlockStructure& blocks);

/// Groups rows by the final value of R_i(X_{2n}) in an engine trace,
/// splitting where consecutive sorted values differ by more than `gap`.
/// Groups are returned in increasing order of the ratio.
std::vector<IndexSet> row_partition_from_trace(const IterationTrace& trace,
                                               double gap = 1e-4);

}  // namespace bipfit
