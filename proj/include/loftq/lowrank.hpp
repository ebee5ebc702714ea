// Copyright (C) 2026 The loftq-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include "loftq/matrix.hpp"

#include <cstddef>

namespace loftq {

/// Thin SVD M = U diag(S) V^T with d = min(rows, cols).
/// S is non-increasing; U is rows x d, V is cols x d, both with orthonormal
/// columns. Signs are fixed so that the largest-magnitude entry of every
/// column of U is non-negative (first such entry on ties).
struct SvdResult {
    Matrix U;
    Vector S;
    Matrix V;
};

/// A (rows x r) and B (cols x r) with A B^T the rank-r truncation.
/// Column i of both carries sqrt(sigma_i).
struct LowRankFactors {
    Matrix A;
    Matrix B;

    std::size_t rank() const noexcept { return static_cast<std::size_t>(A.cols()); }

    /// Zero factors of the given shape.
    static LowRankFactors zeros(std::size_t rows, std::size_t cols, std::size_t rank);
    Matrix product() const { return A * B.transpose(); }
};

/// One-sided (Hestenes) Jacobi SVD. O(rows * cols * min(rows, cols)) per sweep,
/// typically 8-15 sweeps for dense random matrices.
SvdResult svd(const Matrix& m);

/// Rank-r factors per A_i = sqrt(s_i) u_i, B_i = sqrt(s_i) v_i.
/// Only the singular vectors of the shorter side are formed by rotations; the
/// other side comes from one product with m, which keeps A B^T equal to the
/// orthogonal projection of m onto the top-r singular subspace.
LowRankFactors truncated_factors(const Matrix& m, std::size_t rank);

double frobenius_norm(const Matrix& m);

/// Largest singular value by power iteration on M^T M. Stops when two
/// successive estimates differ by less than `tol` relatively; throws
/// ConvergenceError (carrying the last estimate) after `max_iters`.
double spectral_norm(const Matrix& m, double tol = 1e-10, int max_iters = 100000);

}  // namespace loftq
