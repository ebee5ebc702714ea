// Copyright (C) 2026 The loftq-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "loftq/quantizer.hpp"

#include "loftq/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace loftq {

namespace {

void require_bits(int bits) {
    if (bits < kMinBits || bits > kMaxBits) {
        throw InvalidArgument("bit width must be in [1, 8], got " + std::to_string(bits));
    }
}

void require_float32_range(double v) {
    if (std::abs(v) > static_cast<double>(std::numeric_limits<float>::max())) {
        throw InvalidInput("block scale " + std::to_string(v) + " exceeds float32 range");
    }
}

// Largest float32 <= v.
double float32_down(double v) {
    require_float32_range(v);
    float f = static_cast<float>(v);
    if (static_cast<double>(f) > v) f = std::nextafter(f, -std::numeric_limits<float>::infinity());
    return f;
}

// Smallest float32 >= v.
double float32_up(double v) {
    require_float32_range(v);
    float f = static_cast<float>(v);
    if (static_cast<double>(f) < v) f = std::nextafter(f, std::numeric_limits<float>::infinity());
    return f;
}

// Stored bounds are float32 and rounded inward, so dequantized values stay
// inside the block's true range.
BlockScale block_scale(std::span<const double> block, Normalization norm) {
    if (norm == Normalization::AbsMax) {
        double amax = 0.0;
        for (double x : block) amax = std::max(amax, std::abs(x));
        return {0.0, float32_down(amax)};
    }
    const auto [mn, mx] = std::minmax_element(block.begin(), block.end());
    const double lo = float32_up(*mn);
    const double hi = float32_down(*mx);
    if (lo > hi) {
        // No float32 inside [min, max]: collapse to a constant block.
        require_float32_range(*mn);
        const double c = static_cast<float>(*mn);
        return {c, c};
    }
    return {lo, hi};
}

double denormalize(double level, const BlockScale& s, Normalization norm) {
    if (norm == Normalization::AbsMax) {
        return s.hi == 0.0 ? 0.0 : level * s.hi;
    }
    if (s.lo == s.hi) return s.lo;
    return std::clamp(s.lo + level * (s.hi - s.lo), s.lo, s.hi);
}

}  // namespace

std::size_t packed_size(std::size_t count, int bits) {
    return (count * static_cast<std::size_t>(bits) + 7) / 8;
}

std::vector<std::uint8_t> pack_codes(std::span<const std::uint8_t> codes, int bits) {
    require_bits(bits);
    const unsigned limit = 1u << bits;
    std::vector<std::uint8_t> out(packed_size(codes.size(), bits), 0);
    std::size_t bit = 0;
    for (std::size_t k = 0; k < codes.size(); ++k, bit += static_cast<std::size_t>(bits)) {
        const unsigned code = codes[k];
        if (code >= limit) {
            throw InvalidArgument("code " + std::to_string(code) + " at index " + std::to_string(k) +
                                  " does not fit in " + std::to_string(bits) + " bits");
        }
        const std::size_t byte = bit / 8;
        const unsigned shift = bit % 8;
        const unsigned shifted = code << shift;
        out[byte] |= static_cast<std::uint8_t>(shifted & 0xFFu);
        if (shift + static_cast<unsigned>(bits) > 8) {
            out[byte + 1] |= static_cast<std::uint8_t>(shifted >> 8);
        }
    }
    return out;
}

std::vector<std::uint8_t> unpack_codes(std::span<const std::uint8_t> bytes, int bits,
                                       std::size_t count) {
    require_bits(bits);
    if (bytes.size() != packed_size(count, bits)) {
        throw FormatError("packed code length " + std::to_string(bytes.size()) + " bytes, expected " +
                          std::to_string(packed_size(count, bits)) + " for " +
                          std::to_string(count) + " codes of " + std::to_string(bits) + " bits");
    }
    const unsigned mask = (1u << bits) - 1u;
    std::vector<std::uint8_t> codes(count);
    std::size_t bit = 0;
    for (std::size_t k = 0; k < count; ++k, bit += static_cast<std::size_t>(bits)) {
        const std::size_t byte = bit / 8;
        const unsigned shift = bit % 8;
        unsigned word = bytes[byte];
        if (shift + static_cast<unsigned>(bits) > 8) word |= static_cast<unsigned>(bytes[byte + 1]) << 8;
        codes[k] = static_cast<std::uint8_t>((word >> shift) & mask);
    }
    const std::size_t used = count * static_cast<std::size_t>(bits);
    if (used % 8 != 0 && (bytes.back() >> (used % 8)) != 0) {
        throw FormatError("nonzero padding bits after the last packed code");
    }
    return codes;
}

std::size_t QuantizedMatrix::block_count() const noexcept {
    return block_size == 0 ? 0 : (element_count() + block_size - 1) / block_size;
}

void QuantizedMatrix::validate() const {
    if (rows == 0 || cols == 0) throw FormatError("quantized matrix has an empty dimension");
    if (block_size == 0) throw FormatError("quantized matrix block size is zero");
    if (scales.size() != block_count()) {
        throw FormatError("expected " + std::to_string(block_count()) + " block scales, found " +
                          std::to_string(scales.size()));
    }
    if (packed_codes.size() != packed_size(element_count(), codebook.bits())) {
        throw FormatError("packed code length " + std::to_string(packed_codes.size()) +
                          " does not match " + std::to_string(element_count()) + " codes of " +
                          std::to_string(codebook.bits()) + " bits");
    }
    const Normalization norm = codebook.normalization();
    for (const BlockScale& s : scales) {
        if (!std::isfinite(s.lo) || !std::isfinite(s.hi)) throw FormatError("non-finite block scale");
        if (norm == Normalization::MinMax && !(s.lo <= s.hi)) {
            throw FormatError("block scale has x_min > x_max");
        }
        if (norm == Normalization::AbsMax && (s.lo != 0.0 || s.hi < 0.0)) {
            throw FormatError("absmax block scale must be non-negative");
        }
    }
}

QuantizedMatrix quantize_matrix(const Matrix& w, const QuantSpec& spec) {
    if (w.rows() == 0 || w.cols() == 0) throw InvalidArgument("cannot quantize an empty matrix");
    if (spec.block_size == 0) throw InvalidArgument("block size must be positive");
    require_finite(w, "quantize_matrix input");

    const Codebook& cb = spec.codebook;
    const Normalization norm = cb.normalization();
    const std::size_t count = static_cast<std::size_t>(w.size());
    const std::span<const double> flat(w.data(), count);

    QuantizedMatrix qm{static_cast<std::size_t>(w.rows()), static_cast<std::size_t>(w.cols()),
                       spec.block_size, cb, {}, {}};
    qm.scales.reserve(qm.block_count());
    std::vector<std::uint8_t> codes(count, 0);

    for (std::size_t begin = 0; begin < count; begin += spec.block_size) {
        const std::size_t len = std::min(spec.block_size, count - begin);
        const auto block = flat.subspan(begin, len);
        const BlockScale s = block_scale(block, norm);
        qm.scales.push_back(s);
        if (s.degenerate(norm)) continue;  // all codes stay 0

        if (norm == Normalization::AbsMax) {
            for (std::size_t i = 0; i < len; ++i) codes[begin + i] = cb.encode(block[i] / s.hi, spec.rule);
        } else {
            const double range = s.hi - s.lo;
            for (std::size_t i = 0; i < len; ++i) {
                codes[begin + i] = cb.encode((block[i] - s.lo) / range, spec.rule);
            }
        }
    }
    qm.packed_codes = pack_codes(codes, cb.bits());
    return qm;
}

QuantizedMatrix quantize_matrix(const Matrix& w, const Codebook& codebook, std::size_t block_size) {
    return quantize_matrix(w, QuantSpec{codebook, block_size});
}

Matrix dequantize_matrix(const QuantizedMatrix& qm) {
    qm.validate();
    const auto codes = unpack_codes(qm.packed_codes, qm.codebook.bits(), qm.element_count());
    const auto levels = qm.codebook.levels();
    const Normalization norm = qm.codebook.normalization();

    Matrix out(static_cast<Eigen::Index>(qm.rows), static_cast<Eigen::Index>(qm.cols));
    double* dst = out.data();
    for (std::size_t b = 0; b < qm.scales.size(); ++b) {
        const std::size_t begin = b * qm.block_size;
        const std::size_t end = std::min(begin + qm.block_size, codes.size());
        const BlockScale& s = qm.scales[b];
        for (std::size_t k = begin; k < end; ++k) dst[k] = denormalize(levels[codes[k]], s, norm);
    }
    return out;
}

Matrix simulate_quantization(const Matrix& w, const QuantSpec& spec) {
    return dequantize_matrix(quantize_matrix(w, spec));
}

void require_finite(const Matrix& m, std::string_view what) {
    if (!m.allFinite()) {
        throw InvalidInput(std::string(what) + " contains non-finite values");
    }
}

}  // namespace loftq
