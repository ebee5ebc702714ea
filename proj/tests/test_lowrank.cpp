// Copyright (C) 2026 The loftq-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "loftq/error.hpp"
#include "loftq/lowrank.hpp"
#include "support/test_util.hpp"

#include <gtest/gtest.h>

#include <limits>

using namespace loftq;

namespace {

Matrix diag3() {
    Matrix m = Matrix::Zero(3, 3);
    m(0, 0) = 3;
    m(1, 1) = 2;
    m(2, 2) = 1;
    return m;
}

void expect_orthonormal_columns(const Matrix& q, double tol) {
    const Matrix g = q.transpose() * q;
    EXPECT_LE((g - Matrix::Identity(g.rows(), g.cols())).cwiseAbs().maxCoeff(), tol);
}

}  // namespace

TEST(Svd, DiagonalMatrix) {
    const auto r = svd(diag3());
    ASSERT_EQ(r.S.size(), 3);
    EXPECT_NEAR(r.S(0), 3.0, 1e-15);
    EXPECT_NEAR(r.S(1), 2.0, 1e-15);
    EXPECT_NEAR(r.S(2), 1.0, 1e-15);
    EXPECT_LE((r.U - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LE((r.V - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Svd, ZeroMatrix) {
    const auto r = svd(Matrix::Zero(4, 3));
    for (Eigen::Index i = 0; i < r.S.size(); ++i) EXPECT_EQ(r.S(i), 0.0);
    expect_orthonormal_columns(r.U, 1e-12);
    expect_orthonormal_columns(r.V, 1e-12);
}

TEST(Svd, RandomMatchesEigenOracle) {
    for (auto [rows, cols] : {std::pair{8, 6}, std::pair{6, 8}, std::pair{1, 5}, std::pair{5, 1}, std::pair{17, 17}}) {
        const Matrix m = test::gaussian(rows, cols, 42 + rows * cols);
        const auto r = svd(m);
        const Matrix recon = r.U * r.S.asDiagonal() * r.V.transpose();
        EXPECT_LE((recon - m).cwiseAbs().maxCoeff(), 1e-8) << rows << "x" << cols;
        const auto s = test::oracle_singular_values(m);
        ASSERT_EQ(static_cast<std::size_t>(r.S.size()), s.size());
        for (std::size_t i = 0; i < s.size(); ++i) EXPECT_NEAR(r.S(i), s[i], 1e-8);
        for (Eigen::Index i = 1; i < r.S.size(); ++i) EXPECT_GE(r.S(i - 1), r.S(i));
        expect_orthonormal_columns(r.U, 1e-10);
        expect_orthonormal_columns(r.V, 1e-10);
    }
}

TEST(Svd, SignConvention) {
    const auto r = svd(test::gaussian(9, 7, 5));
    for (Eigen::Index j = 0; j < r.U.cols(); ++j) {
        Eigen::Index idx = 0;
        r.U.col(j).cwiseAbs().maxCoeff(&idx);
        EXPECT_GE(r.U(idx, j), 0.0);
    }
}

TEST(Svd, RankDeficientHasOrthonormalBasis) {
    const Matrix a = test::gaussian(10, 2, 8);
    const Matrix m = a * test::gaussian(2, 6, 9);
    const auto r = svd(m);
    EXPECT_LE(r.S(2), 1e-12);
    expect_orthonormal_columns(r.U, 1e-10);
    EXPECT_LE((r.U * r.S.asDiagonal() * r.V.transpose() - m).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Svd, Deterministic) {
    const Matrix m = test::gaussian(30, 20, 77);
    const auto a = svd(m);
    const auto b = svd(m);
    EXPECT_TRUE(a.U == b.U);
    EXPECT_TRUE(a.S == b.S);
    EXPECT_TRUE(a.V == b.V);
}

TEST(Svd, RejectsNonFinite) {
    Matrix m = Matrix::Ones(3, 3);
    m(0, 2) = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(svd(m), InvalidInput);
    EXPECT_THROW(truncated_factors(m, 1), InvalidInput);
}

TEST(TruncatedFactors, DiagonalRankOne) {
    const auto f = truncated_factors(diag3(), 1);
    const Matrix p = f.product();
    Matrix expect = Matrix::Zero(3, 3);
    expect(0, 0) = 3;
    EXPECT_LE((p - expect).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_NEAR((diag3() - p).norm(), std::sqrt(5.0), 1e-14);
}

TEST(TruncatedFactors, FullRankReconstructs) {
    for (auto [rows, cols] : {std::pair{9, 5}, std::pair{5, 9}, std::pair{12, 12}}) {
        const Matrix m = test::gaussian(rows, cols, rows + 100 * cols);
        const auto f = truncated_factors(m, std::min(rows, cols));
        EXPECT_LE((m - f.product()).norm(), 1e-8 * m.norm());
    }
}

TEST(TruncatedFactors, EckartYoungTailSum) {
    const Matrix m = test::gaussian(10, 7, 2024);
    const auto f = truncated_factors(m, 3);
    const double err2 = (m - f.product()).squaredNorm();
    const double tail = test::oracle_tail_energy(m, 3);
    EXPECT_NEAR(err2, tail, 1e-8 * tail);
}

TEST(TruncatedFactors, BalancedColumns) {
    // Column i of A and B both have norm sqrt(sigma_i).
    for (auto [rows, cols] : {std::pair{20, 12}, std::pair{12, 20}}) {
        const Matrix m = test::gaussian(rows, cols, 31);
        const auto f = truncated_factors(m, 4);
        const auto s = test::oracle_singular_values(m);
        ASSERT_EQ(f.A.rows(), rows);
        ASSERT_EQ(f.B.rows(), cols);
        ASSERT_EQ(f.rank(), 4u);
        for (Eigen::Index i = 0; i < 4; ++i) {
            EXPECT_NEAR(f.A.col(i).squaredNorm(), s[i], 1e-9 * s[0]);
            EXPECT_NEAR(f.B.col(i).squaredNorm(), s[i], 1e-9 * s[0]);
        }
        const Matrix ga = f.A.transpose() * f.A;
        for (Eigen::Index i = 0; i < 4; ++i)
            for (Eigen::Index j = 0; j < 4; ++j)
                if (i != j) {
                    EXPECT_NEAR(ga(i, j), 0.0, 1e-9 * s[0]);
                }
    }
}

TEST(TruncatedFactors, RankOutOfRange) {
    const Matrix m = test::gaussian(4, 3, 1);
    EXPECT_THROW(truncated_factors(m, 0), InvalidArgument);
    EXPECT_THROW(truncated_factors(m, 4), InvalidArgument);
}

TEST(TruncatedFactors, ZeroMatrixGivesZeroFactors) {
    const auto f = truncated_factors(Matrix::Zero(6, 5), 2);
    EXPECT_EQ(f.product().cwiseAbs().maxCoeff(), 0.0);
}

TEST(FrobeniusNorm, Examples) {
    EXPECT_DOUBLE_EQ(frobenius_norm(Matrix::Identity(3, 3)), std::sqrt(3.0));
    EXPECT_EQ(frobenius_norm(Matrix::Zero(2, 5)), 0.0);
    Matrix m(1, 2);
    m << 3, 4;
    EXPECT_EQ(frobenius_norm(m), 5.0);
}

TEST(SpectralNorm, Examples) {
    EXPECT_NEAR(spectral_norm(diag3()), 3.0, 1e-9);
    const Eigen::VectorXd u = test::gaussian(4, 1, 3).col(0).normalized() * 2.0;
    const Eigen::VectorXd v = test::gaussian(3, 1, 4).col(0).normalized() * 5.0;
    EXPECT_NEAR(spectral_norm(u * v.transpose()), 10.0, 1e-9);
    EXPECT_EQ(spectral_norm(Matrix::Zero(3, 3)), 0.0);
}

TEST(SpectralNorm, MatchesSvd) {
    const Matrix m = test::gaussian(32, 32, 99);
    const auto r = svd(m);
    EXPECT_NEAR(spectral_norm(m), r.S(0), 1e-6);
}

TEST(SpectralNorm, ConvergenceErrorCarriesEstimate) {
    const Matrix m = test::gaussian(32, 32, 99);
    try {
        spectral_norm(m, 1e-15, 2);
        FAIL() << "expected ConvergenceError";
    } catch (const ConvergenceError& e) {
        EXPECT_GT(e.last_estimate(), 0.0);
    }
}
