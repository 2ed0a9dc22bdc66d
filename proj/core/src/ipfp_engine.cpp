#include "bipfit/ipfp_engine.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

namespace bipfit {

std::string_view to_string(StopReason reason) {
  switch (reason) {
    case StopReason::Converged: return "Converged";
    case StopReason::EvenOddConverged: return "EvenOddConverged";
    case StopReason::IterationCap: return "IterationCap";
  }
  return "?";
}

void StoppingRule::validate() const {
  if (!(tol_marginal > 0.0) || !(tol_even_odd > 0.0) || max_iters == 0 ||
      window == 0 || storage_cap < 4) {
    throw InvalidInput("stopping rule: tolerances, max_iters, window and "
                       "storage_cap must be positive");
  }
}

IpfpIterator::IpfpIterator(const FittingProblem& problem)
    : a_(problem.a()), b_(problem.b()), x_(problem.x0()) {}

void IpfpIterator::step() {
  x_ = (n_ % 2 == 0) ? t_r(x_, a_) : t_c(x_, b_);
  ++n_;
}

namespace {

class TraceStore {
 public:
  explicit TraceStore(Index cap) : cap_(cap) {}

  void offer(Index n, const NonNegMatrix& x) {
    if ((n / 2) % stride_ != 0) return;
    indices_.push_back(n);
    iterates_.push_back(x);
    if (iterates_.size() > cap_) decimate();
  }

  std::vector<Index> take_indices() { return std::move(indices_); }
  std::vector<NonNegMatrix> take_iterates() { return std::move(iterates_); }

 private:
  void decimate() {
    stride_ *= 2;
    std::vector<Index> idx;
    std::vector<NonNegMatrix> its;
    for (Index k = 0; k < indices_.size(); ++k) {
      if ((indices_[k] / 2) % stride_ == 0) {
        idx.push_back(indices_[k]);
        its.push_back(std::move(iterates_[k]));
      }
    }
    indices_ = std::move(idx);
    iterates_ = std::move(its);
  }

  Index cap_;
  Index stride_ = 1;
  std::vector<Index> indices_;
  std::vector<NonNegMatrix> iterates_;
};

// Tracks whether the last `window` steps X_{n} -> X_{n+2} of one parity were
// all below tolerance.
class CauchyWindow {
 public:
  CauchyWindow(Index window, double tol) : window_(window), tol_(tol) {}

  void push(double step) {
    steps_.push_back(step);
    if (steps_.size() > window_) steps_.pop_front();
  }

  bool settled() const {
    return steps_.size() == window_ &&
           std::all_of(steps_.begin(), steps_.end(),
                       [this](double s) { return s < tol_; });
  }

 private:
  Index window_;
  double tol_;
  std::deque<double> steps_;
};

}  // namespace

IterationTrace run(const FittingProblem& problem, const StoppingRule& rule) {
  rule.validate();
  IterationTrace trace{problem, {}, {}, {}, {}, StopReason::IterationCap,
                       problem.x0(), std::nullopt, std::nullopt, 0, 0};
  TraceStore store(rule.storage_cap);
  CauchyWindow even_window(rule.window, rule.tol_even_odd);
  CauchyWindow odd_window(rule.window, rule.tol_even_odd);

  IpfpIterator it(problem);
  // prev[n % 2] holds X_{n-2} once available.
  std::optional<NonNegMatrix> prev[2];

  auto record = [&](const NonNegMatrix& x, Index n) {
    trace.ratio_history.push_back(ratio_vectors(x, problem.a(), problem.b()));
    trace.errors.push_back(l1_error(x, problem.a(), problem.b()));
    store.offer(n, x);
    auto& slot = prev[n % 2];
    if (slot) {
      const double step = l1_distance(x.matrix(), slot->matrix());
      (n % 2 == 0 ? even_window : odd_window).push(step);
    }
    slot = x;
  };

  record(it.current(), 0);
  while (true) {
    const Index n = it.index();
    if (trace.errors.back() < rule.tol_marginal) {
      trace.stop_reason = StopReason::Converged;
      break;
    }
    if (even_window.settled() && odd_window.settled()) {
      trace.stop_reason = StopReason::EvenOddConverged;
      break;
    }
    if (n >= rule.max_iters) {
      trace.stop_reason = StopReason::IterationCap;
      break;
    }
    it.step();
    record(it.current(), it.index());
  }

  const Index last = it.index();
  trace.final_iterate = it.current();
  const Index other = last >= 1 ? last - 1 : last;
  for (Index n : {last, other}) {
    if (!prev[n % 2]) continue;
    if (n % 2 == 0) {
      trace.last_even = *prev[0];
      trace.last_even_index = n;
    } else {
      trace.last_odd = *prev[1];
      trace.last_odd_index = n;
    }
  }
  trace.stored_indices = store.take_indices();
  trace.iterates = store.take_iterates();
  // The final iterate is always kept even if decimation skipped it.
  if (trace.stored_indices.back() != last) {
    trace.stored_indices.push_back(last);
    trace.iterates.push_back(trace.final_iterate);
  }
  return trace;
}

Matrix p_matrix(const NonNegMatrix& x, const Marginals& a, const Marginals& b,
                double fit_tol) {
  if (x.rows() != a.size() || x.cols() != b.size())
    throw DimensionMismatch("p_matrix: marginal sizes");
  const auto cs = x.matrix().col_sums();
  for (Index j = 0; j < cs.size(); ++j) {
    if (std::abs(cs[j] / b[j] - 1.0) > fit_tol) {
      throw PreconditionViolation("p_matrix: X is not column-fitted (C_" +
                                  std::to_string(j + 1) + " = " +
                                  std::to_string(cs[j] / b[j]) + ")");
    }
  }
  const NonNegMatrix y = t_r(x, a);
  const auto cy = y.matrix().col_sums();
  const Index p = x.rows();
  const Index q = x.cols();
  Matrix p_mat(p, p);
  for (Index i = 0; i < p; ++i)
    for (Index k = 0; k < p; ++k) {
      double s = 0.0;
      for (Index j = 0; j < q; ++j) {
        // C_j(T_R(X)) b_j is just the column sum of T_R(X).
        s += y(i, j) * y(k, j) / cy[j];
      }
      p_mat(i, k) = s / a[i];
    }
  return p_mat;
}

std::vector<Matrix> p_matrix_sequence(const FittingProblem& problem, Index count) {
  std::vector<Matrix> out;
  out.reserve(count);
  IpfpIterator it(problem);
  it.step();
  it.step();
  for (Index k = 0; k < count; ++k) {
    out.push_back(p_matrix(it.current(), problem.a(), problem.b()));
    it.step();
    it.step();
  }
  return out;
}

namespace {

struct LineFit {
  double slope;
  double r_squared;
};

LineFit fit_line(const std::vector<double>& xs, const std::vector<double>& ys) {
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (Index k = 0; k < xs.size(); ++k) {
    mx += xs[k];
    my += ys[k];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (Index k = 0; k < xs.size(); ++k) {
    sxx += (xs[k] - mx) * (xs[k] - mx);
    sxy += (xs[k] - mx) * (ys[k] - my);
    syy += (ys[k] - my) * (ys[k] - my);
  }
  const double slope = sxy / sxx;
  const double r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return {slope, r2};
}

}  // namespace

RateReport rate_estimate(const IterationTrace& trace) {
  std::vector<Index> even_pos;
  for (Index k = 0; k < trace.stored_indices.size(); ++k)
    if (trace.stored_indices[k] % 2 == 0) even_pos.push_back(k);
  if (even_pos.size() < 10) {
    throw PreconditionViolation("rate_estimate: need at least 10 stored even "
                                "iterates, have " +
                                std::to_string(even_pos.size()));
  }
  const Index p = trace.problem.rows();
  const Index q = trace.problem.cols();
  const Matrix& limit = trace.iterates[even_pos.back()].matrix();
  const Matrix& before = trace.iterates[even_pos[even_pos.size() - 2]].matrix();

  RateReport report;
  report.rows = p;
  report.cols = q;
  report.cells.resize(p * q);
  report.dominant_slope = -std::numeric_limits<double>::infinity();
  report.all_converged = true;

  for (Index i = 0; i < p; ++i) {
    for (Index j = 0; j < q; ++j) {
      CellRate& cell = report.cells[i * q + j];
      const double last_step = std::abs(limit(i, j) - before(i, j));
      // Points whose distance to L is within ~1e3 final steps are dominated
      // by the error in L itself.
      const double floor = std::max(1e3 * last_step,
                                    64 * std::numeric_limits<double>::epsilon() *
                                        std::max(std::abs(limit(i, j)), 1e-300));
      std::vector<double> xs, ys;
      for (Index k = 0; k + 1 < even_pos.size(); ++k) {
        const double err =
            std::abs(trace.iterates[even_pos[k]].matrix()(i, j) - limit(i, j));
        if (err > floor) {
          xs.push_back(static_cast<double>(trace.stored_indices[even_pos[k]]));
          ys.push_back(std::log(err));
        }
      }
      // Use the tail: the second half of the usable points.
      if (xs.size() >= 6) {
        const Index start = xs.size() / 2;
        xs.erase(xs.begin(), xs.begin() + static_cast<std::ptrdiff_t>(start));
        ys.erase(ys.begin(), ys.begin() + static_cast<std::ptrdiff_t>(start));
      }
      if (xs.size() < 3) {
        cell.converged = true;
        cell.slope = -std::numeric_limits<double>::infinity();
        cell.r_squared = 1.0;
        cell.points = xs.size();
        continue;
      }
      const LineFit fit = fit_line(xs, ys);
      cell.slope = fit.slope;
      cell.r_squared = fit.r_squared;
      cell.points = xs.size();
      report.all_converged = false;
      if (fit.slope > report.dominant_slope) {
        report.dominant_slope = fit.slope;
        report.dominant_r_squared = fit.r_squared;
        report.dominant_row = i;
        report.dominant_col = j;
      }
    }
  }
  return report;
}

CrossRatioReport cross_ratio_check(const IterationTrace& trace, double rel_tol) {
  CrossRatioReport report;
  const Matrix& x0 = trace.problem.x0().matrix();
  const Index p = x0.rows();
  const Index q = x0.cols();
  for (Index i = 0; i < p; ++i)
    for (Index i2 = i + 1; i2 < p; ++i2)
      for (Index j = 0; j < q; ++j)
        for (Index j2 = j + 1; j2 < q; ++j2) {
          if (x0(i, j) == 0.0 || x0(i2, j2) == 0.0 || x0(i, j2) == 0.0 ||
              x0(i2, j) == 0.0) {
            ++report.skipped;
            continue;
          }
          ++report.checked;
          const double ref = x0(i, j) * x0(i2, j2) / (x0(i, j2) * x0(i2, j));
          for (const auto& it : trace.iterates) {
            const Matrix& x = it.matrix();
            const double v = x(i, j) * x(i2, j2) / (x(i, j2) * x(i2, j));
            report.max_relative_deviation =
                std::max(report.max_relative_deviation, std::abs(v / ref - 1.0));
          }
        }
  report.constant = report.max_relative_deviation <= rel_tol;
  return report;
}

std::vector<std::pair<double, double>> nested_intervals(const IterationTrace& trace) {
  std::vector<std::pair<double, double>> out;
  for (Index n = 1; n < trace.ratio_history.size(); ++n) {
    const auto& rv = trace.ratio_history[n];
    if (n % 2 == 1)
      out.emplace_back(1.0 / rv.c_max(), 1.0 / rv.c_min());
    else
      out.emplace_back(rv.r_min(), rv.r_max());
  }
  return out;
}

bool nested_intervals_hold(const IterationTrace& trace, double slack) {
  const auto iv = nested_intervals(trace);
  for (Index k = 0; k < iv.size(); ++k) {
    if (iv[k].first > 1.0 + slack || iv[k].second < 1.0 - slack) return false;
    if (k > 0 && (iv[k].first < iv[k - 1].first - slack ||
                  iv[k].second > iv[k - 1].second + slack))
      return false;
  }
  return true;
}

bool errors_non_increasing(const IterationTrace& trace, double rel_slack) {
  for (Index n = 2; n < trace.errors.size(); ++n) {
    const double bound = trace.errors[n - 1] * (1.0 + rel_slack) + 1e-15;
    if (trace.errors[n] > bound) return false;
  }
  return true;
}

std::vector<SupportLossCell> support_loss_diagnostic(const IterationTrace& trace) {
  const auto& supp = trace.problem.support();
  const Index n_total = trace.ratio_history.size();
  const Index half = n_total / 2;
  std::vector<SupportLossCell> out;
  for (Index i = 0; i < supp.rows(); ++i)
    for (Index j = 0; j < supp.cols(); ++j) {
      if (!supp(i, j)) continue;
      SupportLossCell cell{i, j, 0.0, 0.0, false};
      for (Index n = 0; n < n_total; ++n) {
        const auto& rv = trace.ratio_history[n];
        // The map applied to X_n uses R(X_n) for even n and C(X_n) for odd n.
        cell.log_product += std::log(n % 2 == 0 ? rv.r[i] : rv.c[j]);
        if (n + 1 == half) cell.log_product_half = cell.log_product;
      }
      const double growth = cell.log_product - cell.log_product_half;
      cell.growing = cell.log_product > 1.0 && growth > 0.05 * cell.log_product;
      out.push_back(cell);
    }
  return out;
}

}  // namespace bipfit
