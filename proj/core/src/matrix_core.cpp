#include "bipfit/matrix_core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace bipfit {

namespace {

void require_same_shape(const Matrix& x, const Matrix& y, const char* what) {
  if (x.rows() != y.rows() || x.cols() != y.cols()) {
    std::ostringstream os;
    os << what << ": shape " << x.rows() << "x" << x.cols() << " vs "
       << y.rows() << "x" << y.cols();
    throw DimensionMismatch(os.str());
  }
}

void require_normalized(const NonNegMatrix& x, const char* what) {
  if (std::abs(x.total() - 1.0) > tol::kSum) {
    throw InvalidInput(std::string(what) + ": matrix total mass is " +
                       std::to_string(x.total()) + ", expected 1");
  }
}

}  // namespace

// ---------------------------------------------------------------- Matrix

Matrix::Matrix(Index rows, Index cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ ? rows.begin()->size() : 0;
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw DimensionMismatch("ragged matrix literal");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
  Matrix m;
  m.rows_ = rows.size();
  m.cols_ = m.rows_ ? rows.front().size() : 0;
  m.data_.reserve(m.rows_ * m.cols_);
  for (Index i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != m.cols_) {
      throw DimensionMismatch("row " + std::to_string(i + 1) + " has " +
                              std::to_string(rows[i].size()) +
                              " entries, expected " + std::to_string(m.cols_));
    }
    m.data_.insert(m.data_.end(), rows[i].begin(), rows[i].end());
  }
  return m;
}

Matrix Matrix::identity(Index n) {
  Matrix m(n, n);
  for (Index i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::outer(std::span<const double> u, std::span<const double> v) {
  Matrix m(u.size(), v.size());
  for (Index i = 0; i < u.size(); ++i)
    for (Index j = 0; j < v.size(); ++j) m(i, j) = u[i] * v[j];
  return m;
}

std::vector<double> Matrix::row_sums() const {
  std::vector<double> s(rows_, 0.0);
  for (Index i = 0; i < rows_; ++i)
    for (Index j = 0; j < cols_; ++j) s[i] += (*this)(i, j);
  return s;
}

std::vector<double> Matrix::col_sums() const {
  std::vector<double> s(cols_, 0.0);
  for (Index i = 0; i < rows_; ++i)
    for (Index j = 0; j < cols_; ++j) s[j] += (*this)(i, j);
  return s;
}

double Matrix::total() const {
  return std::accumulate(data_.begin(), data_.end(), 0.0);
}

double Matrix::max_entry() const {
  return data_.empty() ? 0.0 : *std::max_element(data_.begin(), data_.end());
}

double Matrix::min_entry() const {
  return data_.empty() ? 0.0 : *std::min_element(data_.begin(), data_.end());
}

Matrix Matrix::transpose() const {
  Matrix t(cols_, rows_);
  for (Index i = 0; i < rows_; ++i)
    for (Index j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

Matrix Matrix::operator*(const Matrix& rhs) const {
  if (cols_ != rhs.rows_) throw DimensionMismatch("matrix product");
  Matrix out(rows_, rhs.cols_);
  for (Index i = 0; i < rows_; ++i)
    for (Index k = 0; k < cols_; ++k) {
      const double lik = (*this)(i, k);
      if (lik == 0.0) continue;
      for (Index j = 0; j < rhs.cols_; ++j) out(i, j) += lik * rhs(k, j);
    }
  return out;
}

std::vector<double> Matrix::operator*(std::span<const double> v) const {
  if (cols_ != v.size()) throw DimensionMismatch("matrix-vector product");
  std::vector<double> out(rows_, 0.0);
  for (Index i = 0; i < rows_; ++i)
    for (Index j = 0; j < cols_; ++j) out[i] += (*this)(i, j) * v[j];
  return out;
}

Matrix& Matrix::operator*=(double s) {
  for (auto& x : data_) x *= s;
  return *this;
}

std::vector<std::vector<double>> Matrix::to_rows() const {
  std::vector<std::vector<double>> out(rows_);
  for (Index i = 0; i < rows_; ++i) out[i].assign(row(i).begin(), row(i).end());
  return out;
}

double l1_distance(const Matrix& x, const Matrix& y) {
  require_same_shape(x, y, "l1_distance");
  return l1_distance(x.data(), y.data());
}

double l1_distance(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw DimensionMismatch("l1_distance on vectors");
  double s = 0.0;
  for (Index k = 0; k < u.size(); ++k) s += std::abs(u[k] - v[k]);
  return s;
}

double max_abs_diff(const Matrix& x, const Matrix& y) {
  require_same_shape(x, y, "max_abs_diff");
  double m = 0.0;
  for (Index k = 0; k < x.data().size(); ++k)
    m = std::max(m, std::abs(x.data()[k] - y.data()[k]));
  return m;
}

// ------------------------------------------------------------- Marginals

Marginals::Marginals(std::vector<double> values) : values_(std::move(values)) {
  if (values_.empty()) throw InvalidInput("marginals: empty vector");
  for (Index i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i]) || !(values_[i] > 0.0)) {
      throw InvalidInput("marginals: entry " + std::to_string(i + 1) +
                         " is not strictly positive");
    }
  }
  const double sum = std::accumulate(values_.begin(), values_.end(), 0.0);
  if (std::abs(sum - 1.0) > tol::kSum) {
    std::ostringstream os;
    os.precision(17);
    os << "marginals: entries sum to " << sum << ", expected 1";
    throw InvalidInput(os.str());
  }
  if (sum != 1.0)
    for (auto& v : values_) v /= sum;
}

double Marginals::min() const {
  return *std::min_element(values_.begin(), values_.end());
}

double Marginals::max() const {
  return *std::max_element(values_.begin(), values_.end());
}

double Marginals::mass(std::span<const Index> subset) const {
  double s = 0.0;
  for (Index i : subset) s += values_.at(i);
  return s;
}

Marginals Marginals::conditional(std::span<const Index> subset) const {
  if (subset.empty()) throw InvalidInput("conditional marginal on empty set");
  const double total = mass(subset);
  std::vector<double> v;
  v.reserve(subset.size());
  for (Index i : subset) v.push_back(values_[i] / total);
  return Marginals(std::move(v));
}

// -------------------------------------------------------- SupportPattern

SupportPattern::SupportPattern(Index rows, Index cols, std::vector<bool> mask)
    : rows_(rows), cols_(cols), mask_(std::move(mask)) {
  if (mask_.size() != rows_ * cols_)
    throw DimensionMismatch("support mask size does not match its shape");
  for (Index i = 0; i < rows_; ++i) {
    bool any = false;
    for (Index j = 0; j < cols_ && !any; ++j) any = (*this)(i, j);
    if (!any) throw InvalidInput("support: row " + std::to_string(i + 1) + " is empty");
  }
  for (Index j = 0; j < cols_; ++j) {
    bool any = false;
    for (Index i = 0; i < rows_ && !any; ++i) any = (*this)(i, j);
    if (!any) throw InvalidInput("support: column " + std::to_string(j + 1) + " is empty");
  }
}

SupportPattern SupportPattern::of(const Matrix& x) {
  const double threshold = tol::kZero * x.max_entry();
  std::vector<bool> mask(x.rows() * x.cols());
  for (Index i = 0; i < x.rows(); ++i)
    for (Index j = 0; j < x.cols(); ++j)
      mask[i * x.cols() + j] = x(i, j) > threshold;
  return SupportPattern(x.rows(), x.cols(), std::move(mask));
}

SupportPattern SupportPattern::full(Index rows, Index cols) {
  return SupportPattern(rows, cols, std::vector<bool>(rows * cols, true));
}

Index SupportPattern::count() const {
  return static_cast<Index>(std::count(mask_.begin(), mask_.end(), true));
}

bool SupportPattern::is_subset_of(const SupportPattern& other) const {
  if (rows_ != other.rows_ || cols_ != other.cols_)
    throw DimensionMismatch("support comparison");
  for (Index k = 0; k < mask_.size(); ++k)
    if (mask_[k] && !other.mask_[k]) return false;
  return true;
}

bool SupportPattern::is_null_on(std::span<const Index> rows,
                                std::span<const Index> cols) const {
  for (Index i : rows)
    for (Index j : cols)
      if ((*this)(i, j)) return false;
  return true;
}

SupportPattern SupportPattern::restricted(std::span<const Index> rows,
                                          std::span<const Index> cols) const {
  std::vector<bool> mask(rows.size() * cols.size());
  for (Index r = 0; r < rows.size(); ++r)
    for (Index c = 0; c < cols.size(); ++c)
      mask[r * cols.size() + c] = (*this)(rows[r], cols[c]);
  return SupportPattern(rows.size(), cols.size(), std::move(mask));
}

Matrix SupportPattern::mask(const Matrix& x) const {
  if (x.rows() != rows_ || x.cols() != cols_)
    throw DimensionMismatch("support mask shape");
  Matrix out = x;
  for (Index i = 0; i < rows_; ++i)
    for (Index j = 0; j < cols_; ++j)
      if (!(*this)(i, j)) out(i, j) = 0.0;
  return out;
}

std::string SupportPattern::to_string() const {
  std::string s;
  for (Index i = 0; i < rows_; ++i) {
    for (Index j = 0; j < cols_; ++j) s += (*this)(i, j) ? '*' : '0';
    s += '\n';
  }
  return s;
}

// ---------------------------------------------------------- NonNegMatrix

NonNegMatrix::NonNegMatrix(Matrix m) : m_(std::move(m)) {
  if (m_.rows() == 0 || m_.cols() == 0) throw InvalidInput("matrix is empty");
  for (Index i = 0; i < m_.rows(); ++i)
    for (Index j = 0; j < m_.cols(); ++j) {
      const double v = m_(i, j);
      if (!std::isfinite(v) || v < 0.0) {
        throw InvalidInput("matrix entry (" + std::to_string(i + 1) + "," +
                           std::to_string(j + 1) +
                           ") is negative or not finite");
      }
    }
  const auto rs = m_.row_sums();
  for (Index i = 0; i < rs.size(); ++i)
    if (!(rs[i] > 0.0))
      throw InvalidInput("matrix row " + std::to_string(i + 1) + " sums to zero");
  const auto cs = m_.col_sums();
  for (Index j = 0; j < cs.size(); ++j)
    if (!(cs[j] > 0.0))
      throw InvalidInput("matrix column " + std::to_string(j + 1) + " sums to zero");
}

NonNegMatrix NonNegMatrix::normalized() const {
  Matrix m = m_;
  m *= 1.0 / m_.total();
  return NonNegMatrix(std::move(m), Unchecked{});
}

// -------------------------------------------------------- FittingProblem

namespace {

Matrix clean_seed(Matrix x0) {
  NonNegMatrix checked(x0);
  const double threshold = tol::kZero * x0.max_entry();
  for (auto& v : x0.data())
    if (v <= threshold) v = 0.0;
  x0 *= 1.0 / x0.total();
  return x0;
}

}  // namespace

FittingProblem::FittingProblem(Matrix x0, Marginals a, Marginals b)
    : x0_(clean_seed(std::move(x0))),
      a_(std::move(a)),
      b_(std::move(b)),
      support_(x0_.support()) {
  if (x0_.rows() != a_.size() || x0_.cols() != b_.size()) {
    throw DimensionMismatch("problem: X0 is " + std::to_string(x0_.rows()) + "x" +
                            std::to_string(x0_.cols()) + " but |a| = " +
                            std::to_string(a_.size()) + ", |b| = " +
                            std::to_string(b_.size()));
  }
  if (rows() < 2 || cols() < 2)
    throw InvalidInput("problem: need at least 2 rows and 2 columns");
}

// ---------------------------------------------------------- RatioVectors

double RatioVectors::r_min() const { return *std::min_element(r.begin(), r.end()); }
double RatioVectors::r_max() const { return *std::max_element(r.begin(), r.end()); }
double RatioVectors::c_min() const { return *std::min_element(c.begin(), c.end()); }
double RatioVectors::c_max() const { return *std::max_element(c.begin(), c.end()); }

// ------------------------------------------------------------ operations

NonNegMatrix t_r(const NonNegMatrix& x, const Marginals& a) {
  if (x.rows() != a.size()) throw DimensionMismatch("t_r: |a| != rows");
  Matrix m = x.matrix();
  const auto rs = m.row_sums();
  for (Index i = 0; i < m.rows(); ++i) {
    const double scale = a[i] / rs[i];
    for (Index j = 0; j < m.cols(); ++j) m(i, j) *= scale;
  }
  return NonNegMatrix(std::move(m), NonNegMatrix::Unchecked{});
}

NonNegMatrix t_c(const NonNegMatrix& x, const Marginals& b) {
  if (x.cols() != b.size()) throw DimensionMismatch("t_c: |b| != cols");
  Matrix m = x.matrix();
  const auto cs = m.col_sums();
  std::vector<double> scale(cs.size());
  for (Index j = 0; j < cs.size(); ++j) scale[j] = b[j] / cs[j];
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) m(i, j) *= scale[j];
  return NonNegMatrix(std::move(m), NonNegMatrix::Unchecked{});
}

RatioVectors ratio_vectors(const NonNegMatrix& x, const Marginals& a,
                           const Marginals& b) {
  if (x.rows() != a.size() || x.cols() != b.size())
    throw DimensionMismatch("ratio_vectors: marginal sizes");
  RatioVectors out{x.matrix().row_sums(), x.matrix().col_sums()};
  for (Index i = 0; i < out.r.size(); ++i) out.r[i] /= a[i];
  for (Index j = 0; j < out.c.size(); ++j) out.c[j] /= b[j];
  return out;
}

double kl_divergence(const NonNegMatrix& y, const NonNegMatrix& x) {
  require_same_shape(y.matrix(), x.matrix(), "kl_divergence");
  require_normalized(y, "kl_divergence");
  require_normalized(x, "kl_divergence");
  double d = 0.0;
  for (Index k = 0; k < x.matrix().data().size(); ++k) {
    const double yk = y.matrix().data()[k];
    const double xk = x.matrix().data()[k];
    if (yk == 0.0) continue;
    if (xk == 0.0) return std::numeric_limits<double>::infinity();
    d += yk * std::log(yk / xk);
  }
  // Round-off can push the sum a hair below zero when y == x.
  return std::max(d, 0.0);
}

double log_f_s(const NonNegMatrix& s, const NonNegMatrix& x) {
  require_same_shape(s.matrix(), x.matrix(), "f_s");
  double acc = 0.0;
  for (Index k = 0; k < x.matrix().data().size(); ++k) {
    const double sk = s.matrix().data()[k];
    if (sk == 0.0) continue;
    const double xk = x.matrix().data()[k];
    if (xk == 0.0) return -std::numeric_limits<double>::infinity();
    acc += sk * std::log(xk);
  }
  return acc;
}

double f_s(const NonNegMatrix& s, const NonNegMatrix& x) {
  require_normalized(s, "f_s");
  require_normalized(x, "f_s");
  return std::exp(log_f_s(s, x));
}

double l1_error(const NonNegMatrix& x, const Marginals& a, const Marginals& b) {
  if (x.rows() != a.size() || x.cols() != b.size())
    throw DimensionMismatch("l1_error: marginal sizes");
  const auto rs = x.matrix().row_sums();
  const auto cs = x.matrix().col_sums();
  double e = 0.0;
  for (Index i = 0; i < rs.size(); ++i) e += std::abs(rs[i] - a[i]);
  for (Index j = 0; j < cs.size(); ++j) e += std::abs(cs[j] - b[j]);
  return e;
}

}  // namespace bipfit
