// Copyright (C) 2026 The loftq-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "loftq/lowrank.hpp"

#include "loftq/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace loftq {

namespace {

using ColMatrix = Eigen::MatrixXd;

constexpr int kMaxSweeps = 100;

// Orthogonalizes the columns of g in place by plane rotations; the same
// rotations are applied to the columns of v when given. On return the columns
// of g are sigma_j * u_j (unsorted) and g_in * v = g_out.
void hestenes_jacobi(ColMatrix& g, ColMatrix* v) {
    const Eigen::Index m = g.rows();
    const Eigen::Index n = g.cols();
    const double tol = std::numeric_limits<double>::epsilon() * std::sqrt(static_cast<double>(m));
    std::vector<double> sq(static_cast<std::size_t>(n));

    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        for (Eigen::Index j = 0; j < n; ++j) sq[j] = g.col(j).squaredNorm();
        bool rotated = false;
        for (Eigen::Index p = 0; p + 1 < n; ++p) {
            for (Eigen::Index q = p + 1; q < n; ++q) {
                const double a = sq[p];
                const double b = sq[q];
                if (a == 0.0 || b == 0.0) continue;
                const double gamma = g.col(p).dot(g.col(q));
                if (std::abs(gamma) <= tol * std::sqrt(a) * std::sqrt(b)) continue;
                rotated = true;

                const double zeta = (b - a) / (2.0 * gamma);
                const double t = std::abs(zeta) > 1e150
                                     ? 0.5 / zeta
                                     : std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;

                double* gp = g.col(p).data();
                double* gq = g.col(q).data();
                for (Eigen::Index i = 0; i < m; ++i) {
                    const double x = gp[i];
                    const double y = gq[i];
                    gp[i] = c * x - s * y;
                    gq[i] = s * x + c * y;
                }
                if (v != nullptr) {
                    double* vp = v->col(p).data();
                    double* vq = v->col(q).data();
                    for (Eigen::Index i = 0; i < v->rows(); ++i) {
                        const double x = vp[i];
                        const double y = vq[i];
                        vp[i] = c * x - s * y;
                        vq[i] = s * x + c * y;
                    }
                }
                sq[p] = a - t * gamma;
                sq[q] = b + t * gamma;
            }
        }
        if (!rotated) return;
    }
    throw ConvergenceError("Jacobi SVD did not converge in " + std::to_string(kMaxSweeps) + " sweeps",
                           0.0);
}

// Column norms of g sorted descending; ties keep column order.
std::vector<Eigen::Index> descending_order(const ColMatrix& g, std::vector<double>& sigma) {
    const Eigen::Index n = g.cols();
    sigma.resize(static_cast<std::size_t>(n));
    for (Eigen::Index j = 0; j < n; ++j) sigma[j] = g.col(j).norm();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return sigma[a] > sigma[b]; });
    return order;
}

// True if the largest-magnitude entry (first on ties) is negative.
template <typename Col>
bool needs_flip(const Col& col) {
    Eigen::Index idx = 0;
    double best = -1.0;
    for (Eigen::Index i = 0; i < col.size(); ++i) {
        const double a = std::abs(col(i));
        if (a > best) {
            best = a;
            idx = i;
        }
    }
    return col(idx) < 0.0;
}

// Fills columns flagged in `missing` with unit vectors orthogonal to all others.
void complete_basis(ColMatrix& u, const std::vector<bool>& missing) {
    const Eigen::Index m = u.rows();
    Eigen::Index candidate = 0;
    for (Eigen::Index k = 0; k < u.cols(); ++k) {
        if (!missing[static_cast<std::size_t>(k)]) continue;
        for (; candidate < m; ++candidate) {
            Eigen::VectorXd x = Eigen::VectorXd::Unit(m, candidate);
            for (int pass = 0; pass < 2; ++pass) {
                for (Eigen::Index j = 0; j < u.cols(); ++j) {
                    if (j == k || (missing[static_cast<std::size_t>(j)] && j > k)) continue;
                    x -= u.col(j).dot(x) * u.col(j);
                }
            }
            const double nx = x.norm();
            if (nx > 0.5) {
                u.col(k) = x / nx;
                ++candidate;
                break;
            }
        }
    }
}

}  // namespace

LowRankFactors LowRankFactors::zeros(std::size_t rows, std::size_t cols, std::size_t rank) {
    const auto r = static_cast<Eigen::Index>(rank);
    return {Matrix::Zero(static_cast<Eigen::Index>(rows), r),
            Matrix::Zero(static_cast<Eigen::Index>(cols), r)};
}

SvdResult svd(const Matrix& m) {
    require_finite(m, "svd input");
    if (m.size() == 0) throw InvalidArgument("svd of an empty matrix");

    const bool tall = m.rows() >= m.cols();
    ColMatrix g = tall ? ColMatrix(m) : ColMatrix(m.transpose());
    const Eigen::Index rows = g.rows();
    const Eigen::Index d = g.cols();
    ColMatrix v = ColMatrix::Identity(d, d);
    hestenes_jacobi(g, &v);

    std::vector<double> sigma;
    const auto order = descending_order(g, sigma);

    ColMatrix left(rows, d);
    ColMatrix right(d, d);
    Vector s(d);
    std::vector<bool> missing(static_cast<std::size_t>(d), false);
    for (Eigen::Index k = 0; k < d; ++k) {
        const Eigen::Index j = order[static_cast<std::size_t>(k)];
        const double sj = sigma[static_cast<std::size_t>(j)];
        s(k) = sj;
        right.col(k) = v.col(j);
        if (sj > 0.0 && std::isnormal(sj)) {
            left.col(k) = g.col(j) / sj;
        } else {
            s(k) = 0.0;
            left.col(k).setZero();
            missing[static_cast<std::size_t>(k)] = true;
        }
    }
    complete_basis(left, missing);

    SvdResult out;
    out.S = s;
    if (tall) {
        out.U = left;
        out.V = right;
    } else {
        out.U = right;
        out.V = left;
    }
    for (Eigen::Index k = 0; k < d; ++k) {
        if (needs_flip(out.U.col(k))) {
            out.U.col(k) *= -1.0;
            out.V.col(k) *= -1.0;
        }
    }
    return out;
}

LowRankFactors truncated_factors(const Matrix& m, std::size_t rank) {
    require_finite(m, "truncated_factors input");
    const auto d = static_cast<std::size_t>(std::min(m.rows(), m.cols()));
    if (rank < 1 || rank > d) {
        throw InvalidArgument("rank " + std::to_string(rank) + " outside [1, " + std::to_string(d) + "]");
    }
    const bool tall = m.rows() >= m.cols();
    ColMatrix g = tall ? ColMatrix(m) : ColMatrix(m.transpose());
    hestenes_jacobi(g, nullptr);
    std::vector<double> sigma;
    const auto order = descending_order(g, sigma);

    LowRankFactors f = LowRankFactors::zeros(static_cast<std::size_t>(m.rows()),
                                             static_cast<std::size_t>(m.cols()), rank);
    for (std::size_t k = 0; k < rank; ++k) {
        const Eigen::Index j = order[k];
        const double sj = sigma[static_cast<std::size_t>(j)];
        if (!(sj > 0.0 && std::isnormal(sj))) continue;  // sqrt(0) zeroes both columns
        const double root = std::sqrt(sj);
        const auto col = static_cast<Eigen::Index>(k);
        if (tall) {
            Eigen::VectorXd u = g.col(j) / sj;
            if (needs_flip(u)) u = -u;
            f.A.col(col) = root * u;
            f.B.col(col) = (m.transpose() * u) / root;
        } else {
            Eigen::VectorXd v = g.col(j) / sj;
            Eigen::VectorXd mv = m * v;
            if (needs_flip(mv)) {
                v = -v;
                mv = -mv;
            }
            f.A.col(col) = mv / root;
            f.B.col(col) = root * v;
        }
    }
    return f;
}

double frobenius_norm(const Matrix& m) { return m.norm(); }

double spectral_norm(const Matrix& m, double tol, int max_iters) {
    if (!(tol > 0.0)) throw InvalidArgument("spectral_norm tolerance must be positive");
    require_finite(m, "spectral_norm input");
    if (m.size() == 0 || m.isZero(0.0)) return 0.0;

    std::mt19937_64 rng(0x5eedULL);
    std::normal_distribution<double> normal;
    Eigen::VectorXd x(m.cols());
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = normal(rng);
    x.normalize();

    double estimate = 0.0;
    for (int it = 0; it < max_iters; ++it) {
        const Eigen::VectorXd y = m * x;
        const double next = y.norm();
        Eigen::VectorXd z = m.transpose() * y;
        const double nz = z.norm();
        if (it > 0 && std::abs(next - estimate) < tol * next) return next;
        estimate = next;
        if (nz == 0.0) return estimate;
        x = z / nz;
    }
    throw ConvergenceError("power iteration did not converge in " + std::to_string(max_iters) +
                               " iterations",
                           estimate);
}

}  // namespace loftq
