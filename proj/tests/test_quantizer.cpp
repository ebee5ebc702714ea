// Copyright (C) 2026 The loftq-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "loftq/error.hpp"
#include "loftq/quantizer.hpp"
#include "support/test_util.hpp"

#include <gtest/gtest.h>

#include <limits>
#include <random>

using namespace loftq;

namespace {

double widest_half_gap(const Codebook& cb) {
    double g = 0.0;
    for (std::size_t i = 1; i < cb.size(); ++i) g = std::max(g, cb.levels()[i] - cb.levels()[i - 1]);
    return 0.5 * g;
}

Matrix row(std::initializer_list<double> v) {
    Matrix m(1, static_cast<Eigen::Index>(v.size()));
    Eigen::Index j = 0;
    for (double x : v) m(0, j++) = x;
    return m;
}

}  // namespace

TEST(PackCodes, TwoBitLsbFirst) {
    const std::vector<std::uint8_t> codes{1, 2, 3, 0};
    const auto bytes = pack_codes(codes, 2);
    ASSERT_EQ(bytes.size(), 1u);
    EXPECT_EQ(bytes[0], 0x39);
    EXPECT_EQ(unpack_codes(bytes, 2, 4), codes);
}

TEST(PackCodes, SingleFourBitCode) {
    const std::vector<std::uint8_t> codes{15};
    EXPECT_EQ(pack_codes(codes, 4), std::vector<std::uint8_t>{0x0F});
}

TEST(PackCodes, ThreeBitsStraddleBytes) {
    // 5 = 101, 6 = 110, 7 = 111 -> stream bits 101 011 111 (LSB first)
    const std::vector<std::uint8_t> codes{5, 6, 7};
    const auto bytes = pack_codes(codes, 3);
    ASSERT_EQ(bytes.size(), 2u);
    EXPECT_EQ(bytes[0], 0xF5);  // 0b11110101
    EXPECT_EQ(bytes[1], 0x01);
}

TEST(PackCodes, RoundTripRandom) {
    std::mt19937_64 rng(3);
    for (int bits = 1; bits <= 8; ++bits) {
        std::uniform_int_distribution<int> code(0, (1 << bits) - 1);
        for (std::size_t n : {0u, 1u, 7u, 8u, 9u, 63u, 1000u}) {
            std::vector<std::uint8_t> cs(n);
            for (auto& c : cs) c = static_cast<std::uint8_t>(code(rng));
            const auto bytes = pack_codes(cs, bits);
            EXPECT_EQ(bytes.size(), packed_size(n, bits));
            EXPECT_EQ(unpack_codes(bytes, bits, n), cs);
        }
    }
}

TEST(PackCodes, Errors) {
    const std::vector<std::uint8_t> overflow{4};
    EXPECT_THROW(pack_codes(overflow, 2), InvalidArgument);
    const std::vector<std::uint8_t> two_bytes{0x00, 0x00};
    EXPECT_THROW(unpack_codes(two_bytes, 2, 4), FormatError);
    const std::vector<std::uint8_t> dirty_pad{0x40};  // bit 6 set, only 3 two-bit codes
    EXPECT_THROW(unpack_codes(dirty_pad, 2, 3), FormatError);
}

TEST(Quantize, ConstantMatrixAbsMaxIsExact) {
    for (double c : {0.375, -2.5, 3.0, static_cast<double>(1e-3f), -7.25e5}) {
        const Matrix w = Matrix::Constant(5, 13, c);
        for (int bits = 1; bits <= 8; ++bits) {
            const auto q = quantize_matrix(w, build_normalfloat_codebook(bits), 16);
            EXPECT_TRUE(dequantize_matrix(q) == w) << c << " " << bits;
        }
    }
}

TEST(Quantize, ConstantMatrixMinMaxIsExact) {
    const Matrix w = Matrix::Constant(4, 4, 0.8125);
    const auto q = quantize_matrix(w, build_uniform_codebook(3), 8);
    EXPECT_TRUE(dequantize_matrix(q) == w);
    for (const auto& s : q.scales) EXPECT_EQ(s.lo, s.hi);
}

TEST(Quantize, ZeroMatrixDequantizesToZero) {
    const Matrix w = Matrix::Zero(7, 9);
    for (auto kind : {CodebookKind::Uniform, CodebookKind::NormalFloat}) {
        const auto q = quantize_matrix(w, make_codebook(kind, 2), 64);
        const Matrix d = dequantize_matrix(q);
        EXPECT_TRUE(d == w);
        for (auto c : unpack_codes(q.packed_codes, 2, q.element_count())) EXPECT_EQ(c, 0);
    }
}

TEST(Quantize, MinMaxHandExample) {
    const Matrix w = row({-1.0, -1.0 / 3.0, 1.0 / 3.0, 1.0});
    const auto q = quantize_matrix(w, build_uniform_codebook(2), 4);
    EXPECT_EQ(unpack_codes(q.packed_codes, 2, 4), (std::vector<std::uint8_t>{0, 1, 2, 3}));
    ASSERT_EQ(q.scales.size(), 1u);
    EXPECT_EQ(q.scales[0].lo, -1.0);
    EXPECT_EQ(q.scales[0].hi, 1.0);
    // -1 + (1/3)*2 and -1 + (2/3)*2 in double arithmetic
    const Matrix d = dequantize_matrix(q);
    EXPECT_EQ(d(0, 0), -1.0);
    EXPECT_NEAR(d(0, 1), -1.0 / 3.0, 1e-15);
    EXPECT_NEAR(d(0, 2), 1.0 / 3.0, 1e-15);
    EXPECT_EQ(d(0, 3), 1.0);
}

TEST(Quantize, ShapeInvariants) {
    const Matrix w = test::gaussian(13, 11, 1);
    for (std::size_t bs : {1u, 7u, 64u, 143u, 500u}) {
        for (int bits = 1; bits <= 8; ++bits) {
            const auto q = quantize_matrix(w, build_normalfloat_codebook(bits), bs);
            EXPECT_EQ(q.scales.size(), (143 + bs - 1) / bs);
            EXPECT_EQ(q.packed_codes.size(), (143 * static_cast<std::size_t>(bits) + 7) / 8);
            for (auto c : unpack_codes(q.packed_codes, bits, 143)) EXPECT_LT(c, 1u << bits);
            EXPECT_NO_THROW(q.validate());
        }
    }
}

TEST(Quantize, ErrorWithinHalfGapTimesScale) {
    for (auto kind : {CodebookKind::Uniform, CodebookKind::NormalFloat, CodebookKind::NormalFloatZero}) {
        for (int bits = 2; bits <= 8; ++bits) {
            const Matrix w = test::gaussian(16, 24, 100 + bits);
            const auto cb = make_codebook(kind, bits);
            const auto q = quantize_matrix(w, cb, 32);
            const Matrix d = dequantize_matrix(q);
            const double half = widest_half_gap(cb);
            for (std::size_t b = 0; b < q.scales.size(); ++b) {
                double mn = std::numeric_limits<double>::infinity(), mx = -mn, amax = 0.0;
                for (std::size_t k = b * 32; k < std::min<std::size_t>(w.size(), (b + 1) * 32); ++k) {
                    mn = std::min(mn, w.data()[k]);
                    mx = std::max(mx, w.data()[k]);
                    amax = std::max(amax, std::abs(w.data()[k]));
                }
                const double range = cb.normalization() == Normalization::AbsMax ? amax : mx - mn;
                for (std::size_t k = b * 32; k < std::min<std::size_t>(w.size(), (b + 1) * 32); ++k) {
                    EXPECT_LE(std::abs(d.data()[k] - w.data()[k]), half * range);
                    if (cb.normalization() == Normalization::AbsMax) {
                        EXPECT_LE(std::abs(d.data()[k]), amax);
                    } else {
                        EXPECT_GE(d.data()[k], mn);
                        EXPECT_LE(d.data()[k], mx);
                    }
                }
            }
        }
    }
}

TEST(Quantize, ProjectionIsIdempotent) {
    for (auto kind : {CodebookKind::Uniform, CodebookKind::NormalFloat}) {
        for (int bits = 1; bits <= 8; ++bits) {
            const QuantSpec spec{make_codebook(kind, bits), 64};
            const Matrix once = simulate_quantization(test::gaussian(20, 30, bits), spec);
            const Matrix twice = simulate_quantization(once, spec);
            EXPECT_TRUE(once == twice) << to_string(kind) << bits;
        }
    }
}

TEST(Quantize, BlocksAreIndependent) {
    // Swapping the two row-blocks of the flattening swaps the outputs.
    const Matrix w = test::gaussian(2, 32, 5);
    Matrix swapped(2, 32);
    swapped.row(0) = w.row(1);
    swapped.row(1) = w.row(0);
    const QuantSpec spec{build_normalfloat_codebook(3), 32};
    const Matrix a = simulate_quantization(w, spec);
    const Matrix b = simulate_quantization(swapped, spec);
    EXPECT_TRUE(a.row(0) == b.row(1));
    EXPECT_TRUE(a.row(1) == b.row(0));
}

TEST(Quantize, RejectsNonFiniteInput) {
    Matrix w = Matrix::Ones(3, 3);
    w(1, 1) = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(quantize_matrix(w, build_uniform_codebook(2)), InvalidInput);
    w(1, 1) = std::numeric_limits<double>::infinity();
    EXPECT_THROW(quantize_matrix(w, build_normalfloat_codebook(2)), InvalidInput);
}

TEST(Quantize, ScalesAreFloat32) {
    const Matrix w = test::gaussian(8, 8, 11);
    for (auto kind : {CodebookKind::Uniform, CodebookKind::NormalFloat}) {
        const auto q = quantize_matrix(w, make_codebook(kind, 4), 16);
        for (const auto& s : q.scales) {
            EXPECT_EQ(s.lo, static_cast<double>(static_cast<float>(s.lo)));
            EXPECT_EQ(s.hi, static_cast<double>(static_cast<float>(s.hi)));
        }
    }
}

TEST(Dequantize, CorruptPackLength) {
    auto q = quantize_matrix(test::gaussian(4, 4, 2), build_normalfloat_codebook(2), 8);
    q.packed_codes.pop_back();
    EXPECT_THROW(dequantize_matrix(q), FormatError);
}
