#pragma once

// Entrywise (Hadamard) products and the identities that let a diagonal
// scaling of the control vector be pushed through a linear operator:
//   A (c .* mu)      == A_mu c
//   (A^T w) .* mu    == A_mu^T w
//   (A^T W A) .* mu mu^T == A_mu^T W A_mu

#include "fluxmc/linalg.hpp"

namespace fluxmc {

/// Entrywise product a .* b.
Vector hadamard(const Vector& a, const Vector& b);

/// S .* (a a^T): scales entry (i, j) by a_i * a_j. S must be square.
Matrix hadamard_outer(const Matrix& s, const Vector& a);

/// A (c .* mu) without forming the scaled operator.
Vector scaled_apply(const Matrix& a, const Vector& mu, const Vector& c);

/// (A^T w) .* mu, the adjoint of scaled_apply.
Vector scaled_adjoint_apply(const Matrix& a, const Vector& mu, const Vector& w);

/// (A^T diag(weight) A) .* (mu mu^T). Weights must be strictly positive.
Matrix scaled_gram(const Matrix& a, const Vector& weight_diag, const Vector& mu);

} // namespace fluxmc
