#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include "bipfit/matrix_core.hpp"

namespace bipfit {

enum class StopReason { Converged, EvenOddConverged, IterationCap };

std::string_view to_string(StopReason reason);

struct StoppingRule {
  /// Stop with Converged once e(X_n) drops below this.
  double tol_marginal = 1e-10;
  /// Stop with EvenOddConverged once ||X_{n+2} - X_n||_1 stays below this for
  /// `window` consecutive steps of both parities.
  double tol_even_odd = 1e-12;
  Index max_iters = 100'000;
  Index window = 8;
  /// Stored iterates are decimated (in even/odd pairs) above this count.
  Index storage_cap = 10'000;

  void validate() const;
};

/// Bare alternating iteration: X_{2k+1} = T_R(X_{2k}), X_{2k+2} = T_C(X_{2k+1}).
class IpfpIterator {
 public:
  explicit IpfpIterator(const FittingProblem& problem);

  Index index() const { return n_; }
  const NonNegMatrix& current() const { return x_; }
  void step();

 private:
  Marginals a_;
  Marginals b_;
  NonNegMatrix x_;
  Index n_ = 0;
};

struct IterationTrace {
  FittingProblem problem;
  /// Iterate numbers of the entries of `iterates`, increasing. Iterates are
  /// kept in (2k, 2k+1) pairs so both parities survive decimation.
  std::vector<Index> stored_indices;
  std::vector<NonNegMatrix> iterates;
  /// R(X_n), C(X_n) for every n, never decimated.
  std::vector<RatioVectors> ratio_history;
  /// e(X_n) for every n, never decimated.
  std::vector<double> errors;
  StopReason stop_reason = StopReason::IterationCap;
  NonNegMatrix final_iterate;
  std::optional<NonNegMatrix> last_even;
  std::optional<NonNegMatrix> last_odd;
  /// Index of the last even / odd iterate (when present).
  Index last_even_index = 0;
  Index last_odd_index = 0;

  /// Number of maps applied (the index of the final iterate).
  Index iterations() const { return errors.size() - 1; }
};

IterationTrace run(const FittingProblem& problem, const StoppingRule& rule = {});

/// The stochastic matrix P(X) with R(T_C(T_R(X))) = P(X) R(X), for X
/// column-fitted (C_j(X) = 1 within fit_tol).
Matrix p_matrix(const NonNegMatrix& x, const Marginals& a, const Marginals& b,
                double fit_tol = 1e-9);

/// P(X_2), P(X_4), ..., P(X_{2 count}) along the iteration from problem.
std::vector<Matrix> p_matrix_sequence(const FittingProblem& problem, Index count);

struct CellRate {
  /// Fitted slope of ln|X_n(i,j) - L(i,j)| against n (per single iteration).
  double slope = 0.0;
  double r_squared = 0.0;
  Index points = 0;
  /// The cell did not move over the fitted window; slope is -infinity.
  bool converged = false;
};

struct RateReport {
  Index rows = 0;
  Index cols = 0;
  std::vector<CellRate> cells;  // row-major
  /// Slowest (largest) finite slope and its cell; -infinity if every cell
  /// was already converged.
  double dominant_slope = 0.0;
  double dominant_r_squared = 0.0;
  Index dominant_row = 0;
  Index dominant_col = 0;
  bool all_converged = false;

  const CellRate& cell(Index i, Index j) const { return cells[i * cols + j]; }
};

/// Per-cell geometric rate estimated from the stored even iterates, with
/// L the last even iterate. A diagnostic only. Throws PreconditionViolation
/// when fewer than 10 even iterates are stored.
RateReport rate_estimate(const IterationTrace& trace);

struct CrossRatioReport {
  Index checked = 0;
  Index skipped = 0;
  double max_relative_deviation = 0.0;
  bool constant = true;
};

/// Checks that X_n(i,j)X_n(i',j')/(X_n(i,j')X_n(i',j)) does not depend on n
/// for every 2x2 minor inside Supp(X0). Minors touching a zero are skipped.
CrossRatioReport cross_ratio_check(const IterationTrace& trace,
                                   double rel_tol = 1e-10);

/// Intervals [1/Cmax(X_1), 1/Cmin(X_1)], [Rmin(X_2), Rmax(X_2)], ... in order.
std::vector<std::pair<double, double>> nested_intervals(const IterationTrace& trace);

/// Every interval contains 1 and is contained in its predecessor, up to slack.
bool nested_intervals_hold(const IterationTrace& trace, double slack = 1e-12);

/// e(X_n) non-increasing for n >= 1, up to a relative slack.
bool errors_non_increasing(const IterationTrace& trace, double rel_slack = 1e-12);

struct SupportLossCell {
  Index row = 0;
  Index col = 0;
  /// ln of R_i(X_0) C_j(X_1) R_i(X_2) ... over the whole trace and over its
  /// first half.
  double log_product = 0.0;
  double log_product_half = 0.0;
  /// The partial product is still growing by a non-negligible amount over
  /// the second half of the trace. Soft signal only.
  bool growing = false;
};

/// Partial products R_i(X_0) C_j(X_1) R_i(X_2) ... for the cells of Supp(X0).
/// Cells whose products keep growing are those expected to leave the support
/// in the limit.
std::vector<SupportLossCell> support_loss_diagnostic(const IterationTrace& trace);

}  // namespace bipfit
