#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "bipfit/errors.hpp"

namespace bipfit {

namespace tol {
/// An entry counts as zero iff it is <= kZero * (largest entry).
inline constexpr double kZero = 1e-14;
/// Marginals whose sum is within kSum of 1 are renormalized; others rejected.
inline constexpr double kSum = 1e-9;
/// a(A) == b(B^c) when |a(A) - b(B^c)| <= kCriticality * max(1, a(A)).
inline constexpr double kCriticality = 1e-12;
/// Certificate margins below this are reported as ill-conditioned.
inline constexpr double kIllConditioned = 1e-9;
}  // namespace tol

using Index = std::size_t;
using IndexSet = std::vector<Index>;

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(Index rows, Index cols, double fill = 0.0);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix from_rows(const std::vector<std::vector<double>>& rows);
  static Matrix identity(Index n);
  static Matrix outer(std::span<const double> u, std::span<const double> v);

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double& operator()(Index i, Index j) { return data_[i * cols_ + j]; }
  double operator()(Index i, Index j) const { return data_[i * cols_ + j]; }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }
  std::span<const double> row(Index i) const {
    return std::span<const double>(data_).subspan(i * cols_, cols_);
  }

  std::vector<double> row_sums() const;
  std::vector<double> col_sums() const;
  double total() const;
  double max_entry() const;
  double min_entry() const;

  Matrix transpose() const;
  Matrix operator*(const Matrix& rhs) const;
  std::vector<double> operator*(std::span<const double> v) const;
  Matrix& operator*=(double s);

  std::vector<std::vector<double>> to_rows() const;

  bool operator==(const Matrix&) const = default;

 private:
  Index rows_ = 0;
  Index cols_ = 0;
  std::vector<double> data_;
};

/// Entrywise sum of absolute differences.
double l1_distance(const Matrix& x, const Matrix& y);
/// Largest entrywise absolute difference.
double max_abs_diff(const Matrix& x, const Matrix& y);
double l1_distance(std::span<const double> u, std::span<const double> v);

/// Target row or column sums: strictly positive weights summing to one.
class Marginals {
 public:
  /// Renormalizes when the sum is within tol::kSum of 1, otherwise throws
  /// InvalidInput. Every entry must be > 0.
  explicit Marginals(std::vector<double> values);

  Index size() const { return values_.size(); }
  double operator[](Index i) const { return values_[i]; }
  std::span<const double> values() const { return values_; }
  double min() const;
  double max() const;

  /// a(A) = sum of a_i over i in A.
  double mass(std::span<const Index> subset) const;
  /// Conditional marginal a(.|P) = (a_i / a(P))_{i in P}, in the order of P.
  Marginals conditional(std::span<const Index> subset) const;

  bool operator==(const Marginals&) const = default;

 private:
  std::vector<double> values_;
};

/// Boolean p x q mask of positive cells.
class SupportPattern {
 public:
  SupportPattern() = default;
  /// Throws InvalidInput when some row or column has no true cell.
  SupportPattern(Index rows, Index cols, std::vector<bool> mask);
  static SupportPattern of(const Matrix& x);
  static SupportPattern full(Index rows, Index cols);

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }
  bool operator()(Index i, Index j) const { return mask_[i * cols_ + j]; }
  Index count() const;

  bool is_subset_of(const SupportPattern& other) const;
  /// True iff every cell of rows x cols is outside the pattern.
  bool is_null_on(std::span<const Index> rows, std::span<const Index> cols) const;
  /// Pattern restricted to rows x cols, reindexed in the given order.
  SupportPattern restricted(std::span<const Index> rows,
                            std::span<const Index> cols) const;
  /// Zeroes the entries of x outside the pattern.
  Matrix mask(const Matrix& x) const;

  std::string to_string() const;
  bool operator==(const SupportPattern&) const = default;

 private:
  Index rows_ = 0;
  Index cols_ = 0;
  std::vector<bool> mask_;
};

/// A matrix with non-negative entries and positive row and column sums.
class NonNegMatrix {
 public:
  /// Validates non-negativity and positive row/column sums.
  explicit NonNegMatrix(Matrix m);

  const Matrix& matrix() const { return m_; }
  Index rows() const { return m_.rows(); }
  Index cols() const { return m_.cols(); }
  double operator()(Index i, Index j) const { return m_(i, j); }
  double total() const { return m_.total(); }
  SupportPattern support() const { return SupportPattern::of(m_); }

  /// Same matrix scaled to total mass one.
  NonNegMatrix normalized() const;

  bool operator==(const NonNegMatrix&) const = default;

 private:
  struct Unchecked {};
  NonNegMatrix(Matrix m, Unchecked) : m_(std::move(m)) {}

  friend NonNegMatrix t_r(const NonNegMatrix&, const Marginals&);
  friend NonNegMatrix t_c(const NonNegMatrix&, const Marginals&);

  Matrix m_;
};

/// Seed matrix plus target marginals. The seed is stored with total mass one
/// and with entries below the zero threshold set to exactly zero.
class FittingProblem {
 public:
  FittingProblem(Matrix x0, Marginals a, Marginals b);

  const NonNegMatrix& x0() const { return x0_; }
  const Marginals& a() const { return a_; }
  const Marginals& b() const { return b_; }
  Index rows() const { return a_.size(); }
  Index cols() const { return b_.size(); }
  const SupportPattern& support() const { return support_; }

 private:
  NonNegMatrix x0_;
  Marginals a_;
  Marginals b_;
  SupportPattern support_;
};

/// R_i(X) = X(i,+)/a_i and C_j(X) = X(+,j)/b_j.
struct RatioVectors {
  std::vector<double> r;
  std::vector<double> c;

  double r_min() const;
  double r_max() const;
  double c_min() const;
  double c_max() const;
};

/// Row scaling: divides row i by R_i(x). Output has row sums a.
NonNegMatrix t_r(const NonNegMatrix& x, const Marginals& a);
/// Column scaling: divides column j by C_j(x). Output has column sums b.
NonNegMatrix t_c(const NonNegMatrix& x, const Marginals& b);

RatioVectors ratio_vectors(const NonNegMatrix& x, const Marginals& a,
                           const Marginals& b);

/// Relative entropy D(y||x) of normalized matrices. Returns +infinity when
/// Supp(y) is not contained in Supp(x).
double kl_divergence(const NonNegMatrix& y, const NonNegMatrix& x);

/// F_S(X) = prod X(i,j)^S(i,j) with 0^0 = 1.
double f_s(const NonNegMatrix& s, const NonNegMatrix& x);
/// ln F_S(X); -infinity when Supp(S) is not contained in Supp(X).
double log_f_s(const NonNegMatrix& s, const NonNegMatrix& x);

/// e(X) = sum_i |X(i,+) - a_i| + sum_j |X(+,j) - b_j|.
double l1_error(const NonNegMatrix& x, const Marginals& a, const Marginals& b);

}  // namespace bipfit
