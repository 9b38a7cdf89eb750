// Copyright (c) 2026 the racecar authors
// Licensed under the Apache License, Version 2.0.

#pragma once

#include <vector>

#include "racecar/matrix.hpp"

namespace racecar {

/// Full SVD m = u * diag(sigma) * v^T.
///
/// u is rows x rows, v is cols x cols, sigma holds min(rows, cols)
/// non-negative values in descending order. Sign convention: the first
/// entry of each right singular vector with magnitude > 1e-12 is positive,
/// so singular vectors are comparable across runs.
struct SvdResult {
    Matrix u;
    std::vector<double> sigma;
    Matrix v;

    /// u * diag(sigma) * v^T, for reconstruction checks.
    Matrix reconstruct() const;
};

/// One-sided Jacobi SVD. Sweeps until every column pair is orthogonal to
/// relative 1e-12, at most 30 sweeps; throws NumericError (with the residual)
/// if that is not reached.
SvdResult svd(const Matrix& m);

/// Largest singular value via power iteration on m^T m from a fixed seed
/// vector. Returns 0 for the zero matrix.
double spectral_norm(const Matrix& m, int max_iters = 100, double tol = 1e-6);

/// Orthonormalizes `vectors` in order; inputs whose residual norm after
/// projection is below 1e-10 are dropped, so the output size is the rank of
/// the stacked inputs.
std::vector<std::vector<double>> gram_schmidt(const std::vector<std::vector<double>>& vectors);

/// Extends r orthonormal columns (given as an m x r matrix) to a full m x m
/// orthogonal matrix whose first r columns are the inputs. Householder based.
Matrix complete_orthonormal_basis(const Matrix& columns, std::size_t full_dim);

}  // namespace racecar
