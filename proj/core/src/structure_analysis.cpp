#include "bipfit/structure_analysis.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <sstream>

#include "bipfit/max_flow.hpp"

namespace bipfit {

std::string_view to_string(CauseKind kind) {
  return kind == CauseKind::Incompatibility ? "Incompatibility" : "Criticality";
}

std::string_view to_string(Behavior behavior) {
  switch (behavior) {
    case Behavior::FastConvergence: return "FastConvergence";
    case Behavior::SlowConvergence: return "SlowConvergence";
    case Behavior::Divergence: return "Divergence";
  }
  return "?";
}

namespace {

double criticality_tol(double a_mass) {
  return tol::kCriticality * std::max(1.0, a_mass);
}

IndexSet complement(const IndexSet& set, Index n) {
  IndexSet out;
  for (Index k = 0; k < n; ++k)
    if (!std::binary_search(set.begin(), set.end(), k)) out.push_back(k);
  return out;
}

std::string describe(const IndexSet& s) {
  std::ostringstream os;
  os << '{';
  for (Index k = 0; k < s.size(); ++k) os << (k ? "," : "") << s[k] + 1;
  os << '}';
  return os.str();
}

void require_shapes(const Marginals& a, const Marginals& b, const SupportPattern& supp) {
  if (supp.rows() != a.size() || supp.cols() != b.size())
    throw DimensionMismatch("support shape does not match the marginals");
}

// Enumerates every non-empty row set A together with B(A), the columns null
// on all of A, skipping A whose B(A) is empty (no superset can recover).
class NullBlockEnumerator {
 public:
  NullBlockEnumerator(const Marginals& a, const Marginals& b, const SupportPattern& supp,
                      Index max_rows)
      : a_(a), b_(b), p_(a.size()), q_(b.size()) {
    require_shapes(a, b, supp);
    if (p_ > max_rows) {
      throw InvalidInput("subset enumeration limited to " + std::to_string(max_rows) +
                         " rows, instance has " + std::to_string(p_));
    }
    if (q_ > 64) throw InvalidInput("subset enumeration limited to 64 columns");
    zero_cols_.resize(p_, 0);
    for (Index i = 0; i < p_; ++i)
      for (Index j = 0; j < q_; ++j)
        if (!supp(i, j)) zero_cols_[i] |= std::uint64_t{1} << j;
    for (Index byte = 0; byte < 8; ++byte)
      for (Index v = 0; v < 256; ++v) {
        double s = 0.0;
        for (Index bit = 0; bit < 8; ++bit) {
          const Index j = byte * 8 + bit;
          if ((v >> bit) & 1u && j < q_) s += b_[j];
        }
        byte_mass_[byte][v] = s;
      }
    full_cols_ = q_ == 64 ? ~std::uint64_t{0} : ((std::uint64_t{1} << q_) - 1);
  }

  /// Calls visit(row_mask, col_mask, a(A), b(B^c)) for every A with B(A) != {}.
  void run(const std::function<void(std::uint32_t, std::uint64_t, double, double)>& visit) {
    visit_ = &visit;
    descend(0, 0, full_cols_, 0.0);
  }

  double col_mass(std::uint64_t mask) const {
    double s = 0.0;
    for (Index byte = 0; byte < 8; ++byte) s += byte_mass_[byte][(mask >> (8 * byte)) & 0xffu];
    return s;
  }

  std::uint64_t full_cols() const { return full_cols_; }
  std::uint64_t null_cols_of(std::uint32_t rows) const {
    std::uint64_t m = full_cols_;
    for (Index i = 0; i < p_; ++i)
      if ((rows >> i) & 1u) m &= zero_cols_[i];
    return m;
  }

 private:
  void descend(Index start, std::uint32_t rows, std::uint64_t cols, double a_mass) {
    for (Index i = start; i < p_; ++i) {
      const std::uint64_t next_cols = cols & zero_cols_[i];
      if (next_cols == 0) continue;
      const std::uint32_t next_rows = rows | (std::uint32_t{1} << i);
      const double next_a = a_mass + a_[i];
      (*visit_)(next_rows, next_cols, next_a, col_mass(full_cols_ & ~next_cols));
      descend(i + 1, next_rows, next_cols, next_a);
    }
  }

  const Marginals& a_;
  const Marginals& b_;
  Index p_;
  Index q_;
  std::vector<std::uint64_t> zero_cols_;
  std::array<std::array<double, 256>, 8> byte_mass_{};
  std::uint64_t full_cols_ = 0;
  const std::function<void(std::uint32_t, std::uint64_t, double, double)>* visit_ = nullptr;
};

template <typename Mask>
IndexSet bits_to_set(Mask mask, Index n) {
  IndexSet out;
  for (Index k = 0; k < n; ++k)
    if ((mask >> k) & 1u) out.push_back(k);
  return out;
}

}  // namespace

std::optional<Cause> make_cause(IndexSet rows, IndexSet cols, const Marginals& a,
                                const Marginals& b, const SupportPattern& supp) {
  require_shapes(a, b, supp);
  std::sort(rows.begin(), rows.end());
  std::sort(cols.begin(), cols.end());
  if (rows.empty() || cols.empty() || !supp.is_null_on(rows, cols)) return std::nullopt;
  const double a_mass = a.mass(rows);
  const IndexSet col_comp = complement(cols, b.size());
  const double b_comp = b.mass(col_comp);
  const double margin = a_mass - b_comp;
  const double t = criticality_tol(a_mass);
  if (margin < -t) return std::nullopt;
  Cause c;
  c.rows = std::move(rows);
  c.cols = std::move(cols);
  c.kind = margin > t ? CauseKind::Incompatibility : CauseKind::Criticality;
  c.ratio = a_mass / b_comp;
  c.margin = margin;
  return c;
}

void verify_cause(const Cause& cause, const Marginals& a, const Marginals& b,
                  const SupportPattern& supp) {
  require_shapes(a, b, supp);
  const std::string where =
      "cause A=" + describe(cause.rows) + " B=" + describe(cause.cols) + ": ";
  if (cause.rows.empty() || cause.cols.empty())
    throw TheoremViolation(where + "empty block");
  for (Index i : cause.rows)
    if (i >= a.size()) throw TheoremViolation(where + "row index out of range");
  for (Index j : cause.cols)
    if (j >= b.size()) throw TheoremViolation(where + "column index out of range");
  if (!supp.is_null_on(cause.rows, cause.cols))
    throw TheoremViolation(where + "seed is not null on A x B");
  const double a_mass = a.mass(cause.rows);
  const double b_comp = b.mass(complement(cause.cols, b.size()));
  const double margin = a_mass - b_comp;
  const double t = criticality_tol(a_mass);
  const bool ok = cause.kind == CauseKind::Incompatibility ? margin > t
                                                           : std::abs(margin) <= t;
  if (!ok) {
    std::ostringstream os;
    os.precision(17);
    os << where << "a(A) - b(B^c) = " << margin << " contradicts kind "
       << to_string(cause.kind);
    throw TheoremViolation(os.str());
  }
}

FeasibilityResult feasible(const Marginals& a, const Marginals& b,
                           const SupportPattern& supp) {
  require_shapes(a, b, supp);
  TransportFlow flow = max_transport_flow(a.values(), b.values(), supp);

  IndexSet rows, cols;
  for (Index i = 0; i < a.size(); ++i)
    if (flow.source_side_rows[i]) rows.push_back(i);
  for (Index j = 0; j < b.size(); ++j)
    if (!flow.source_side_cols[j]) cols.push_back(j);

  if (auto cause = make_cause(rows, cols, a, b, supp);
      cause && cause->kind == CauseKind::Incompatibility) {
    verify_cause(*cause, a, b, supp);
    return *cause;
  }
  if (flow.value < 1.0 - 1e-10) {
    std::ostringstream os;
    os.precision(17);
    os << "feasible: max flow " << flow.value
       << " falls short of 1 but the min cut is not a cause of incompatibility";
    throw TheoremViolation(os.str());
  }
  return Witness{std::move(flow.flow)};
}

SupportPattern maximal_support(const Marginals& a, const Marginals& b,
                               const SupportPattern& supp) {
  require_shapes(a, b, supp);
  const TransportFlow flow = max_transport_flow(a.values(), b.values(), supp);
  if (flow.value < 1.0 - 1e-10) {
    if (auto res = feasible(a, b, supp); std::holds_alternative<Cause>(res))
      throw PreconditionViolation("maximal_support: instance is infeasible");
  }
  // A feasible matrix can be positive at (i,j) iff the current flow already
  // uses the cell or the residual network has a cycle through i -> j, i.e.
  // row i and column j lie in the same strongly connected component.
  constexpr double kPositive = 1e-12;
  const Index p = a.size();
  const Index q = b.size();
  const Index n = p + q;
  std::vector<std::vector<Index>> adj(n);
  for (Index i = 0; i < p; ++i)
    for (Index j = 0; j < q; ++j) {
      if (!supp(i, j)) continue;
      adj[i].push_back(p + j);
      if (flow.flow(i, j) > kPositive) adj[p + j].push_back(i);
    }

  // Tarjan's strongly connected components.
  std::vector<int> index(n, -1), low(n, 0), comp(n, -1);
  std::vector<bool> on_stack(n, false);
  std::vector<Index> stack;
  int counter = 0;
  int n_comp = 0;
  std::function<void(Index)> strong = [&](Index v) {
    index[v] = low[v] = counter++;
    stack.push_back(v);
    on_stack[v] = true;
    for (Index w : adj[v]) {
      if (index[w] < 0) {
        strong(w);
        low[v] = std::min(low[v], low[w]);
      } else if (on_stack[w]) {
        low[v] = std::min(low[v], index[w]);
      }
    }
    if (low[v] == index[v]) {
      while (true) {
        const Index w = stack.back();
        stack.pop_back();
        on_stack[w] = false;
        comp[w] = n_comp;
        if (w == v) break;
      }
      ++n_comp;
    }
  };
  for (Index v = 0; v < n; ++v)
    if (index[v] < 0) strong(v);

  std::vector<bool> mask(p * q, false);
  for (Index i = 0; i < p; ++i)
    for (Index j = 0; j < q; ++j)
      mask[i * q + j] = supp(i, j) && (flow.flow(i, j) > kPositive || comp[i] == comp[p + j]);
  return SupportPattern(p, q, std::move(mask));
}

SupportPattern maximal_support_by_enumeration(const Marginals& a, const Marginals& b,
                                              const SupportPattern& supp) {
  NullBlockEnumerator blocks(a, b, supp, 20);
  const Index p = a.size();
  const Index q = b.size();
  std::vector<bool> mask(p * q);
  for (Index i = 0; i < p; ++i)
    for (Index j = 0; j < q; ++j) mask[i * q + j] = supp(i, j);
  bool infeasible = false;
  blocks.run([&](std::uint32_t rows, std::uint64_t cols, double a_mass, double b_comp) {
    const double margin = a_mass - b_comp;
    if (margin > criticality_tol(a_mass)) {
      infeasible = true;
    } else if (std::abs(margin) <= criticality_tol(a_mass)) {
      for (Index i = 0; i < p; ++i) {
        if ((rows >> i) & 1u) continue;
        for (Index j = 0; j < q; ++j)
          if (!((cols >> j) & 1u)) mask[i * q + j] = false;
      }
    }
  });
  if (infeasible)
    throw PreconditionViolation("maximal_support_by_enumeration: instance is infeasible");
  return SupportPattern(p, q, std::move(mask));
}

Classification classify(const FittingProblem& problem) {
  const auto& a = problem.a();
  const auto& b = problem.b();
  const auto& supp = problem.support();
  Classification out;
  auto res = feasible(a, b, supp);
  if (auto* cause = std::get_if<Cause>(&res)) {
    verify_cause(*cause, a, b, supp);
    out.behavior = Behavior::Divergence;
    out.ill_conditioned = std::abs(cause->margin) <= tol::kIllConditioned;
    out.cause = std::move(*cause);
    return out;
  }
  Matrix witness = std::get<Witness>(std::move(res)).matrix;
  // Independent re-check of the witness before reporting it.
  const double err = l1_distance(witness.row_sums(), a.values()) +
                     l1_distance(witness.col_sums(), b.values());
  if (err > 1e-10) throw TheoremViolation("classify: witness marginals are off by " +
                                          std::to_string(err));
  for (Index i = 0; i < witness.rows(); ++i)
    for (Index j = 0; j < witness.cols(); ++j)
      if (witness(i, j) > 0.0 && !supp(i, j))
        throw TheoremViolation("classify: witness leaves the support");
  SupportPattern s0 = maximal_support(a, b, supp);
  out.behavior = s0 == supp ? Behavior::FastConvergence : Behavior::SlowConvergence;
  out.feasible_matrix = std::move(witness);
  out.maximal_support = std::move(s0);
  return out;
}

Cause best_cause(const Marginals& a, const Marginals& b, const SupportPattern& supp) {
  NullBlockEnumerator blocks(a, b, supp, kMaxEnumeratedRows);
  const Index p = a.size();
  const Index q = b.size();

  double best_ratio = 0.0;
  std::vector<std::uint32_t> maximizers;
  blocks.run([&](std::uint32_t rows, std::uint64_t, double a_mass, double b_comp) {
    if (a_mass - b_comp <= criticality_tol(a_mass)) return;
    const double ratio = a_mass / b_comp;
    if (ratio > best_ratio * (1.0 + 1e-12)) {
      // A strictly better ratio; earlier near-ties are no longer maximal.
      maximizers.clear();
      best_ratio = ratio;
      maximizers.push_back(rows);
    } else if (ratio >= best_ratio * (1.0 - 1e-12)) {
      maximizers.push_back(rows);
      best_ratio = std::max(best_ratio, ratio);
    }
  });
  if (maximizers.empty())
    throw PreconditionViolation("best_cause: instance is feasible, no cause exists");

  std::uint32_t united = 0;
  for (auto m : maximizers) united |= m;
  const std::uint64_t cols = blocks.null_cols_of(united);
  IndexSet row_set = bits_to_set(united, p);
  IndexSet col_set = bits_to_set(cols, q);
  auto cause = make_cause(row_set, col_set, a, b, supp);
  if (!cause || cause->kind != CauseKind::Incompatibility ||
      std::abs(cause->ratio / best_ratio - 1.0) > 1e-12) {
    std::ostringstream os;
    os.precision(17);
    os << "best_cause: ratio-maximizing row sets are not nested; union "
       << describe(row_set) << " has ratio " << (cause ? cause->ratio : 0.0)
       << " but the maximum is " << best_ratio;
    throw TheoremViolation(os.str());
  }
  verify_cause(*cause, a, b, supp);
  return *cause;
}

std::vector<Cause> incompatibility_causes(const Marginals& a, const Marginals& b,
                                          const SupportPattern& supp) {
  NullBlockEnumerator blocks(a, b, supp, 20);
  std::vector<Cause> out;
  blocks.run([&](std::uint32_t rows, std::uint64_t cols, double a_mass, double b_comp) {
    if (a_mass - b_comp <= criticality_tol(a_mass)) return;
    Cause c;
    c.rows = bits_to_set(rows, a.size());
    c.cols = bits_to_set(cols, b.size());
    c.kind = CauseKind::Incompatibility;
    c.ratio = a_mass / b_comp;
    c.margin = a_mass - b_comp;
    out.push_back(std::move(c));
  });
  std::sort(out.begin(), out.end(), [](const Cause& x, const Cause& y) {
    return x.rows.size() != y.rows.size() ? x.rows.size() < y.rows.size() : x.rows < y.rows;
  });
  return out;
}

Index BlockStructure::row_block_of(Index i) const {
  for (Index k = 0; k < row_blocks.size(); ++k)
    if (std::binary_search(row_blocks[k].begin(), row_blocks[k].end(), i)) return k;
  throw InvalidInput("row index " + std::to_string(i) + " is in no block");
}

Index BlockStructure::col_block_of(Index j) const {
  for (Index k = 0; k < col_blocks.size(); ++k)
    if (std::binary_search(col_blocks[k].begin(), col_blocks[k].end(), j)) return k;
  throw InvalidInput("column index " + std::to_string(j) + " is in no block");
}

BlockStructure block_structure(const FittingProblem& problem) {
  const auto& a = problem.a();
  const auto& b = problem.b();
  const auto& supp = problem.support();

  IndexSet remaining_rows(a.size()), remaining_cols(b.size());
  std::iota(remaining_rows.begin(), remaining_rows.end(), Index{0});
  std::iota(remaining_cols.begin(), remaining_cols.end(), Index{0});

  std::vector<IndexSet> row_blocks, col_blocks;
  std::vector<Cause> step_causes;
  while (true) {
    std::optional<SupportPattern> local_supp;
    try {
      local_supp = supp.restricted(remaining_rows, remaining_cols);
    } catch (const InvalidInput& e) {
      throw TheoremViolation(std::string("block_structure: restricted problem has an "
                                         "empty line: ") + e.what());
    }
    const Marginals local_a = a.conditional(remaining_rows);
    const Marginals local_b = b.conditional(remaining_cols);
    if (std::holds_alternative<Witness>(feasible(local_a, local_b, *local_supp))) {
      row_blocks.push_back(remaining_rows);
      col_blocks.push_back(remaining_cols);
      break;
    }
    const Cause local = best_cause(local_a, local_b, *local_supp);
    Cause global = local;
    IndexSet block_rows, block_cols, rest_rows, rest_cols;
    for (Index& i : global.rows) i = remaining_rows[i];
    for (Index& j : global.cols) j = remaining_cols[j];
    for (Index r : remaining_rows)
      (std::binary_search(global.rows.begin(), global.rows.end(), r) ? block_rows : rest_rows)
          .push_back(r);
    // J_k = Q \ B_k.
    for (Index c : remaining_cols)
      (std::binary_search(global.cols.begin(), global.cols.end(), c) ? rest_cols : block_cols)
          .push_back(c);
    row_blocks.push_back(std::move(block_rows));
    col_blocks.push_back(std::move(block_cols));
    step_causes.push_back(std::move(global));
    remaining_rows = std::move(rest_rows);
    remaining_cols = std::move(rest_cols);
    if (remaining_rows.empty() || remaining_cols.empty())
      throw TheoremViolation("block_structure: recursion exhausted rows or columns");
  }

  const Index r = row_blocks.size();
  std::vector<double> lambdas(r);
  for (Index k = 0; k < r; ++k) lambdas[k] = b.mass(col_blocks[k]) / a.mass(row_blocks[k]);
  for (Index k = 1; k < r; ++k) {
    if (!(lambdas[k] > lambdas[k - 1])) {
      std::ostringstream os;
      os.precision(17);
      os << "block_structure: lambdas not increasing at block " << k + 1 << ": "
         << lambdas[k - 1] << " then " << lambdas[k];
      throw TheoremViolation(os.str());
    }
  }
  for (Index k = 0; k < r; ++k)
    for (Index k2 = k + 1; k2 < r; ++k2)
      if (!supp.is_null_on(row_blocks[k], col_blocks[k2]))
        throw TheoremViolation("block_structure: seed not null on I_" + std::to_string(k + 1) +
                               " x J_" + std::to_string(k2 + 1));

  std::vector<double> a_prime(a.size()), b_prime(b.size());
  for (Index k = 0; k < r; ++k) {
    for (Index i : row_blocks[k]) a_prime[i] = lambdas[k] * a[i];
    for (Index j : col_blocks[k]) b_prime[j] = b[j] / lambdas[k];
  }
  return BlockStructure{r,
                        std::move(row_blocks),
                        std::move(col_blocks),
                        std::move(lambdas),
                        Marginals(std::move(a_prime)),
                        Marginals(std::move(b_prime)),
                        std::move(step_causes)};
}

FittingProblem reduced_problem(const FittingProblem& problem, const BlockStructure& blocks,
                               const SupportPattern& sigma) {
  return FittingProblem(sigma.mask(problem.x0().matrix()), blocks.a_prime, problem.b());
}

LimitPair limit_points(const FittingProblem& problem) {
  return limit_points(problem, block_structure(problem));
}

LimitPair limit_points(const FittingProblem& problem, const BlockStructure& blocks) {
  const SupportPattern sigma = [&] {
    try {
      return maximal_support(blocks.a_prime, problem.b(), problem.support());
    } catch (const PreconditionViolation&) {
      throw TheoremViolation("limit_points: no matrix with marginals (a', b) inside Supp(X0)");
    }
  }();
  const FittingProblem reduced = reduced_problem(problem, blocks, sigma);

  StoppingRule rule;
  rule.tol_marginal = 1e-14;
  rule.tol_even_odd = 1e-16;
  rule.max_iters = 1'000'000;
  rule.storage_cap = 16;
  const IterationTrace trace = run(reduced, rule);
  if (trace.stop_reason == StopReason::IterationCap)
    throw TheoremViolation("limit_points: restarted iteration did not converge");

  NonNegMatrix even = trace.final_iterate;
  if (trace.iterations() % 2 == 1) even = t_c(even, problem.b());

  Matrix odd = even.matrix();
  for (Index i = 0; i < odd.rows(); ++i) {
    const double lambda = blocks.lambdas[blocks.row_block_of(i)];
    for (Index j = 0; j < odd.cols(); ++j) odd(i, j) /= lambda;
  }

  const double even_err = l1_distance(even.matrix().row_sums(), blocks.a_prime.values()) +
                          l1_distance(even.matrix().col_sums(), problem.b().values());
  const double odd_err = l1_distance(odd.row_sums(), problem.a().values()) +
                         l1_distance(odd.col_sums(), blocks.b_prime.values());
  if (even_err > 1e-9 || odd_err > 1e-9)
    throw TheoremViolation("limit_points: limits miss their marginals (even " +
                           std::to_string(even_err) + ", odd " + std::to_string(odd_err) + ")");
  if (!(SupportPattern::of(even.matrix()) == sigma))
    throw TheoremViolation("limit_points: even limit support differs from sigma");

  return LimitPair{std::move(even), NonNegMatrix(std::move(odd)), sigma, trace.iterations()};
}

std::vector<IndexSet> row_partition_from_trace(const IterationTrace& trace, double gap) {
  if (!trace.last_even) throw PreconditionViolation("row_partition_from_trace: no even iterate");
  const auto& r = trace.ratio_history.at(trace.last_even_index).r;
  IndexSet order(r.size());
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(), [&](Index x, Index y) { return r[x] < r[y]; });
  std::vector<IndexSet> groups;
  for (Index k = 0; k < order.size(); ++k) {
    if (k == 0 || r[order[k]] - r[order[k - 1]] > gap) groups.emplace_back();
    groups.back().push_back(order[k]);
  }
  for (auto& g : groups) std::sort(g.begin(), g.end());
  return groups;
}

}  // namespace bipfit
