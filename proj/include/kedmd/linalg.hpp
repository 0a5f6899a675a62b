#pragma once

#include "kedmd/types.hpp"

namespace kedmd {

/// Relative singular-value cutoff used whenever a pseudoinverse is requested.
inline constexpr double kPinvCutoff = 1e-10;

/// (G + beta I)^+ applied to `rhs` for symmetric G.
///
/// beta > 0 solves the shifted system directly; beta == 0 uses an SVD
/// pseudoinverse truncated at kPinvCutoff relative to the largest singular value.
[[nodiscard]] Matrix solve_regularized(const Matrix& G, double beta, const Matrix& rhs);

/// Eigendecomposition of a real square matrix with paired left/right vectors.
///
/// Ordering is by descending |lambda|, then descending real part, then
/// descending imaginary part. Row j of `left` satisfies left.row(j) K = lambda_j left.row(j);
/// column j of `right` satisfies K right.col(j) = lambda_j right.col(j). Both are unit 2-norm.
struct Eigensystem {
  CVector values;
  CMatrix left;
  CMatrix right;
};

[[nodiscard]] Eigensystem eigensystem(const Matrix& K);

/// Sorted eigenvalues only, same ordering as eigensystem().
[[nodiscard]] CVector sorted_eigenvalues(const Matrix& K);

/// min || B - C A ||_F^2 + beta ||C||_F^2 over complex C, solved through the SVD of A.
/// beta == 0 falls back to the truncated pseudoinverse.
[[nodiscard]] CMatrix solve_right_least_squares(const CMatrix& B, const CMatrix& A, double beta);

}  // namespace kedmd
