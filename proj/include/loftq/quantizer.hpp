// Copyright (C) 2026 The loftq-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include "loftq/codebook.hpp"
#include "loftq/matrix.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace loftq {

inline constexpr std::size_t kDefaultBlockSize = 64;

/// Per-block scale record. Both bounds are float32 values held in doubles:
/// the file stores 32-bit scales, and in-memory dequantization uses exactly
/// the stored values so reloads are bit-identical.
///   MinMax: lo = x_min, hi = x_max
///   AbsMax: lo = 0,     hi = max|x|
struct BlockScale {
    double lo = 0.0;
    double hi = 0.0;

    bool degenerate(Normalization n) const noexcept {
        return n == Normalization::AbsMax ? hi == 0.0 : lo == hi;
    }
    bool operator==(const BlockScale&) const = default;
};

/// Codebook + block size: everything q_N(.) needs besides the data.
struct QuantSpec {
    Codebook codebook;
    std::size_t block_size = kDefaultBlockSize;
    EncodeRule rule = EncodeRule::NearestLevel;
};

/// Stored form of a quantized matrix: bit-packed row-major codes and one
/// scale record per block of the row-major flattening.
struct QuantizedMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t block_size = kDefaultBlockSize;
    Codebook codebook;
    std::vector<std::uint8_t> packed_codes;
    std::vector<BlockScale> scales;

    std::size_t element_count() const noexcept { return rows * cols; }
    std::size_t block_count() const noexcept;

    /// Checks block/scale counts, packed length and scale invariants.
    void validate() const;

    bool operator==(const QuantizedMatrix&) const = default;
};

std::size_t packed_size(std::size_t count, int bits);

/// LSB-first bit stream: code k occupies stream bits [k*bits, (k+1)*bits),
/// stream bit j lives in byte j/8 at position j%8. Trailing bits are zero.
std::vector<std::uint8_t> pack_codes(std::span<const std::uint8_t> codes, int bits);
std::vector<std::uint8_t> unpack_codes(std::span<const std::uint8_t> bytes, int bits,
                                       std::size_t count);

QuantizedMatrix quantize_matrix(const Matrix& w, const QuantSpec& spec);
QuantizedMatrix quantize_matrix(const Matrix& w, const Codebook& codebook,
                                std::size_t block_size = kDefaultBlockSize);

Matrix dequantize_matrix(const QuantizedMatrix& qm);

/// dequantize(quantize(w)): the simulated-quantization map.
Matrix simulate_quantization(const Matrix& w, const QuantSpec& spec);

}  // namespace loftq
