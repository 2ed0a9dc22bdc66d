#pragma once

#include <stdexcept>
#include <string>

namespace bipfit {

/// Malformed or out-of-domain input: bad dimensions, negative entries,
/// marginals that do not sum to one, empty rows or columns.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DimensionMismatch : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

/// A documented precondition of an operation does not hold (calling
/// best_cause on a feasible instance, p_matrix on a matrix that is not
/// column-fitted, ...).
class PreconditionViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A runtime assertion of a mathematical invariant failed. Either a bug or a
/// numerically ill-conditioned instance; the message carries the certificate.
class TheoremViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace bipfit
