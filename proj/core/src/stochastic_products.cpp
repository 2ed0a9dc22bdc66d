#include "bipfit/stochastic_products.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace bipfit {

StochasticMatrix::StochasticMatrix(Matrix m, double row_tol) : m_(std::move(m)) {
  if (m_.rows() == 0 || m_.rows() != m_.cols())
    throw InvalidInput("stochastic matrix must be square and non-empty");
  for (double v : m_.data())
    if (!std::isfinite(v) || v < 0.0)
      throw InvalidInput("stochastic matrix has a negative or non-finite entry");
  const auto rs = m_.row_sums();
  for (Index i = 0; i < rs.size(); ++i)
    if (std::abs(rs[i] - 1.0) > row_tol) {
      std::ostringstream os;
      os.precision(17);
      os << "stochastic matrix row " << i + 1 << " sums to " << rs[i];
      throw InvalidInput(os.str());
    }
}

bool StochasticMatrix::is_doubly_stochastic(double tol) const {
  for (double s : m_.col_sums())
    if (std::abs(s - 1.0) > tol) return false;
  return true;
}

bool AssumptionCheck::holds() const { return gamma > 0.0 && std::isfinite(rho); }

AssumptionCheck check_assumptions(std::span<const StochasticMatrix> ms) {
  AssumptionCheck out;
  for (const auto& m : ms) {
    const Index d = m.dim();
    for (Index i = 0; i < d; ++i) {
      out.gamma = std::min(out.gamma, m(i, i));
      for (Index j = 0; j < d; ++j) {
        if (i == j) continue;
        const double num = m(i, j);
        const double den = m(j, i);
        if (num == 0.0) continue;  // 0/x <= 1, and 0/0 := 1
        out.rho = den == 0.0 ? std::numeric_limits<double>::infinity()
                             : std::max(out.rho, num / den);
      }
    }
    out.doubly_stochastic = out.doubly_stochastic && m.is_doubly_stochastic();
  }
  return out;
}

double dispersion(std::span<const double> v) {
  // Sorted form: sum_{i,j} |v_i - v_j| = 2 sum_k (2k - n + 1) v_(k).
  std::vector<double> s(v.begin(), v.end());
  std::sort(s.begin(), s.end());
  const double n = static_cast<double>(s.size());
  double acc = 0.0;
  for (Index k = 0; k < s.size(); ++k) acc += (2.0 * static_cast<double>(k) - n + 1.0) * s[k];
  return 2.0 * acc;
}

namespace {

std::string describe(const Matrix& m, std::span<const double> v) {
  std::ostringstream os;
  os.precision(17);
  os << "M = [";
  for (Index i = 0; i < m.rows(); ++i) {
    os << (i ? "; " : "");
    for (Index j = 0; j < m.cols(); ++j) os << (j ? " " : "") << m(i, j);
  }
  os << "], V = [";
  for (Index k = 0; k < v.size(); ++k) os << (k ? " " : "") << v[k];
  os << "]";
  return os.str();
}

void require_doubly(const StochasticMatrix& m, std::span<const double> v, const char* what) {
  if (v.size() != m.dim()) throw DimensionMismatch(std::string(what) + ": vector size");
  if (!m.is_doubly_stochastic(1e-10))
    throw PreconditionViolation(std::string(what) + ": matrix is not doubly stochastic");
}

}  // namespace

DiameterBounds check_diameter_contraction(const Matrix& m, std::span<const double> v,
                                          double tol) {
  if (m.cols() != v.size()) throw DimensionMismatch("check_diameter_contraction");
  for (double s : m.row_sums())
    if (std::abs(s - 1.0) > 1e-10)
      throw PreconditionViolation("check_diameter_contraction: matrix is not stochastic");
  const double m_min = m.min_entry();
  const auto [vlo, vhi] = std::minmax_element(v.begin(), v.end());
  const auto mv = m * v;
  const auto [mlo, mhi] = std::minmax_element(mv.begin(), mv.end());
  DiameterBounds out;
  out.min_slack = *mlo - ((1.0 - m_min) * *vlo + m_min * *vhi);
  out.max_slack = (m_min * *vlo + (1.0 - m_min) * *vhi) - *mhi;
  out.diam_slack = (1.0 - 2.0 * m_min) * (*vhi - *vlo) - (*mhi - *mlo);
  const double scale = std::max({1.0, std::abs(*vlo), std::abs(*vhi)});
  if (out.min_slack < -tol * scale || out.max_slack < -tol * scale ||
      out.diam_slack < -tol * scale) {
    throw TheoremViolation("diameter contraction violated for " + describe(m, v));
  }
  return out;
}

double check_dispersion_decrease(const StochasticMatrix& m, std::span<const double> v,
                                 double gamma) {
  require_doubly(m, v, "check_dispersion_decrease");
  for (Index i = 0; i < m.dim(); ++i)
    if (m(i, i) < gamma - 1e-15)
      throw PreconditionViolation("check_dispersion_decrease: diagonal entry below gamma");
  const auto mv = m.matrix() * v;
  return dispersion(v) - dispersion(mv) - gamma * l1_distance(mv, v);
}

double check_sorted_partial_sums(const StochasticMatrix& m, std::span<const double> v,
                                 Index k) {
  require_doubly(m, v, "check_sorted_partial_sums");
  if (k < 1 || k > m.dim())
    throw PreconditionViolation("check_sorted_partial_sums: k outside [1, d]");
  auto mv = m.matrix() * v;
  std::vector<double> sv(v.begin(), v.end());
  std::sort(mv.begin(), mv.end());
  std::sort(sv.begin(), sv.end());
  const auto kk = static_cast<std::ptrdiff_t>(k);
  return std::accumulate(mv.begin(), mv.begin() + kk, 0.0) -
         std::accumulate(sv.begin(), sv.begin() + kk, 0.0);
}

double ProductTrace::tail_variation() const {
  const Index n = variation_steps.size();
  double s = 0.0;
  for (Index k = (2 * n) / 3; k < n; ++k) s += variation_steps[k];
  return s;
}

double ProductTrace::variation_up_to(Index len) const {
  double s = 0.0;
  for (Index k = 0; k + 1 < len && k < variation_steps.size(); ++k) s += variation_steps[k];
  return s;
}

ProductTrace product_run(std::span<const StochasticMatrix> ms,
                         std::span<const std::vector<double>> tracked_vectors) {
  ProductTrace out;
  if (ms.empty()) return out;
  const Index d = ms.front().dim();
  for (const auto& m : ms)
    if (m.dim() != d) throw DimensionMismatch("product_run: matrices of different sizes");
  for (const auto& v : tracked_vectors)
    if (v.size() != d) throw DimensionMismatch("product_run: tracked vector size");

  out.assumptions = check_assumptions(ms);
  out.partial_products.reserve(ms.size());
  out.offdiag_partial_sums.reserve(ms.size());
  out.dispersion_history.resize(tracked_vectors.size());
  for (Index v = 0; v < tracked_vectors.size(); ++v)
    out.dispersion_history[v].push_back(dispersion(tracked_vectors[v]));

  Matrix product = Matrix::identity(d);
  Matrix sums(d, d);
  for (Index n = 0; n < ms.size(); ++n) {
    product = ms[n].matrix() * product;
    for (double s : product.row_sums()) {
      const double drift = std::abs(s - 1.0);
      out.max_row_drift = std::max(out.max_row_drift, drift);
      if (drift > 1e-10)
        throw TheoremViolation("product_run: partial product " + std::to_string(n + 1) +
                               " is no longer stochastic (row drift " +
                               std::to_string(drift) + ")");
    }
    for (Index i = 0; i < d; ++i)
      for (Index j = 0; j < d; ++j)
        if (i != j) sums(i, j) += ms[n](i, j);
    if (n > 0) {
      const double step = l1_distance(product, out.partial_products.back());
      out.variation_steps.push_back(step);
      out.variation_sum += step;
    }
    for (Index v = 0; v < tracked_vectors.size(); ++v)
      out.dispersion_history[v].push_back(dispersion(product * tracked_vectors[v]));
    out.partial_products.push_back(product);
    out.offdiag_partial_sums.push_back(sums);
  }
  return out;
}

bool tail_is_cauchy(const ProductTrace& trace, double tol) {
  return trace.length() >= 3 && trace.tail_variation() < tol;
}

std::vector<OffdiagPair> offdiag_convergence_report(const ProductTrace& trace,
                                                    const Matrix& limit,
                                                    double bounded_tol,
                                                    double cauchy_tol) {
  if (!tail_is_cauchy(trace, cauchy_tol))
    throw PreconditionViolation("offdiag_convergence_report: product has not converged");
  const Index d = limit.rows();
  if (trace.last().rows() != d) throw DimensionMismatch("offdiag_convergence_report");
  const Matrix& final_sums = trace.offdiag_partial_sums.back();
  const Matrix& early_sums =
      trace.offdiag_partial_sums[(2 * trace.offdiag_partial_sums.size()) / 3];
  std::vector<OffdiagPair> out;
  for (Index i = 0; i < d; ++i)
    for (Index j = i + 1; j < d; ++j) {
      const double dist = l1_distance(limit.row(i), limit.row(j));
      if (dist <= 1e-6) continue;
      OffdiagPair pair;
      pair.i = i;
      pair.j = j;
      pair.row_distance = dist;
      pair.sum_ij = final_sums(i, j);
      pair.sum_ji = final_sums(j, i);
      pair.tail_ij = final_sums(i, j) - early_sums(i, j);
      pair.tail_ji = final_sums(j, i) - early_sums(j, i);
      pair.bounded = pair.tail_ij <= bounded_tol * std::max(1.0, pair.sum_ij) &&
                     pair.tail_ji <= bounded_tol * std::max(1.0, pair.sum_ji);
      out.push_back(pair);
    }
  return out;
}

StochasticMatrix mr_matrix(double r) {
  if (r < -1.0 || r > 1.0) throw InvalidInput("M(r) needs r in [-1, 1]");
  return StochasticMatrix(Matrix{{(1 + r) / 2, (1 - r) / 2}, {(1 - r) / 2, (1 + r) / 2}});
}

std::vector<StochasticMatrix> mr_family(std::span<const double> r) {
  std::vector<StochasticMatrix> out;
  out.reserve(r.size());
  for (double x : r) out.push_back(mr_matrix(x));
  return out;
}

std::vector<double> mr_geometric_schedule(Index count) {
  std::vector<double> r(count);
  for (Index n = 0; n < count; ++n) r[n] = std::exp(-std::ldexp(1.0, -static_cast<int>(n + 1)));
  return r;
}

StochasticMatrix t0_matrix() {
  return StochasticMatrix(Matrix{{1, 0, 0}, {0, 1, 0}, {0, 0.5, 0.5}});
}

StochasticMatrix t1_matrix() {
  return StochasticMatrix(Matrix{{1, 0, 0}, {0, 1, 0}, {0.5, 0, 0.5}});
}

std::vector<StochasticMatrix> t0t1_alternating(Index count) {
  std::vector<StochasticMatrix> out;
  out.reserve(count);
  for (Index n = 0; n < count; ++n) out.push_back(n % 2 == 0 ? t1_matrix() : t0_matrix());
  return out;
}

StochasticMatrix random_birkhoff(Index d, Index permutations, double gamma,
                                 std::mt19937_64& rng) {
  if (d == 0 || permutations == 0 || gamma < 0.0 || gamma > 1.0)
    throw InvalidInput("random_birkhoff: bad parameters");
  Matrix s(d, d);
  std::vector<Index> perm(d);
  std::iota(perm.begin(), perm.end(), Index{0});
  for (Index k = 0; k < permutations; ++k) {
    std::shuffle(perm.begin(), perm.end(), rng);
    for (Index i = 0; i < d; ++i) s(i, perm[i]) += 1.0 / static_cast<double>(permutations);
  }
  Matrix m(d, d);
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < d; ++j) m(i, j) = (1.0 - gamma) * s(i, j) + (i == j ? gamma : 0.0);
  return StochasticMatrix(std::move(m), 1e-12);
}

StochasticMatrix random_reversible(Index d, double gamma, std::mt19937_64& rng,
                                   double density) {
  if (d == 0 || gamma < 0.0 || gamma > 1.0) throw InvalidInput("random_reversible: bad parameters");
  std::uniform_real_distribution<double> weight(1.0, 2.0);
  std::bernoulli_distribution keep(density);
  Matrix w(d, d);
  std::vector<double> pi(d);
  for (Index i = 0; i < d; ++i) {
    pi[i] = weight(rng);
    for (Index j = i + 1; j < d; ++j)
      if (keep(rng)) w(i, j) = w(j, i) = weight(rng);
  }
  // K(i,j) = W(i,j) pi_j / s off the diagonal, with s the largest weighted
  // row sum so the diagonal remainder stays non-negative. Then
  // K(i,j) / K(j,i) = pi_j / pi_i <= 2.
  double s = 0.0;
  for (Index i = 0; i < d; ++i) {
    double row = 0.0;
    for (Index j = 0; j < d; ++j) row += w(i, j) * pi[j];
    s = std::max(s, row);
  }
  Matrix m(d, d);
  for (Index i = 0; i < d; ++i) {
    double off = 0.0;
    for (Index j = 0; j < d; ++j) {
      if (j == i || s == 0.0) continue;
      m(i, j) = (1.0 - gamma) * w(i, j) * pi[j] / s;
      off += m(i, j);
    }
    m(i, i) = 1.0 - off;
  }
  return StochasticMatrix(std::move(m));
}

}  // namespace bipfit
