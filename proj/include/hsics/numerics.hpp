#pragma once

#include "hsics/core.hpp"

namespace hsics {

/// Economy SVD a = u * diag(sigma) * v^T with r = min(rows, cols).
///
/// sigma is sorted descending (stable for ties, so repeated singular values
/// keep their column order). Each left singular vector is signed so that its
/// largest-magnitude entry (first one on ties) is positive, which makes every
/// factor bit-reproducible for a given input.
struct SvdResult {
  Matrix u;     // rows x r, orthonormal columns
  Vector sigma; // r, descending, >= 0
  Matrix v;     // cols x r, orthonormal columns
};

/// One-sided Jacobi SVD. Tall inputs are first reduced by Householder QR.
/// Throws NumericalError if the Jacobi sweeps do not converge.
SvdResult svd(const Matrix& a);

/// sigma_max / sigma_min, or +infinity when sigma_min < sigma_max * 1e-300.
double condition_number(const Matrix& a);

/// Same, from an already computed spectrum.
double condition_number(const Vector& sigma);

/// d x d orthonormal DCT-II synthesis matrix; column k is the k-th cosine atom.
Matrix dct_basis(Index d);

} // namespace hsics
