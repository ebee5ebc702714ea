// Copyright (C) 2026 The loftq-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace loftq {

/// Serialized as a one-byte tag, so the values are part of the file format.
enum class CodebookKind : std::uint8_t {
    Uniform = 0,
    NormalFloat = 1,
    /// NormalFloat with an exact 0 level (2^(N-1) positive, 2^(N-1)-1 negative quantiles).
    NormalFloatZero = 2,
};

enum class Normalization : std::uint8_t {
    MinMax = 0,  // (x - x_min) / (x_max - x_min) into [0, 1]
    AbsMax = 1,  // x / max|x| into [-1, 1]
};

/// How a normalized value picks its code.
enum class EncodeRule : std::uint8_t {
    NearestLevel,  // argmin_i |levels[i] - x|, ties go to the higher code
    FSpaceRound,   // round((2^N - 1) * F(x)) with F the codebook's CDF
};

struct NormalFloatParams {
    /// Probability trimmed from each tail before taking Gaussian quantiles.
    double quantile_clip = 0.0323;
    /// Gaussian scale. Blocks are absmax-normalized before encoding, so this
    /// only affects the levels through the final rescale to [-1, 1].
    double sigma = 1.0;
    /// Build the asymmetric table with an exact zero level.
    bool zero_level = false;

    void validate() const;
};

inline constexpr int kMinBits = 1;
inline constexpr int kMaxBits = 8;

/// The 2^N dequantization levels plus the normalization they expect.
/// Immutable after construction.
class Codebook {
public:
    /// 1-bit uniform table {0, 1}.
    Codebook() : Codebook(CodebookKind::Uniform, 1, 0.0, {0.0, 1.0}) {}
    /// Validates the table; throws InvalidArgument / FormatError on violations.
    Codebook(CodebookKind kind, int bits, double quantile_clip, std::vector<double> levels);

    CodebookKind kind() const noexcept { return kind_; }
    int bits() const noexcept { return bits_; }
    std::size_t size() const noexcept { return levels_.size(); }
    std::uint32_t max_code() const noexcept { return static_cast<std::uint32_t>(levels_.size() - 1); }
    double quantile_clip() const noexcept { return quantile_clip_; }
    Normalization normalization() const noexcept;
    std::span<const double> levels() const noexcept { return levels_; }

    /// Lower and upper bound of the normalized domain ([0,1] or [-1,1]).
    double domain_min() const noexcept { return levels_.front(); }
    double domain_max() const noexcept { return levels_.back(); }

    /// Clamps x into the domain, then applies the encode rule.
    std::uint8_t encode(double x_normalized, EncodeRule rule = EncodeRule::NearestLevel) const;

    /// Throws InvalidArgument if code >= 2^N.
    double decode(std::uint32_t code) const;

    bool operator==(const Codebook&) const = default;

private:
    std::uint8_t encode_nearest(double x) const noexcept;
    std::uint8_t encode_fspace(double x) const noexcept;

    CodebookKind kind_;
    int bits_;
    double quantile_clip_;
    std::vector<double> levels_;
};

Codebook build_uniform_codebook(int bits);
Codebook build_normalfloat_codebook(int bits, const NormalFloatParams& params = {});
Codebook make_codebook(CodebookKind kind, int bits, const NormalFloatParams& params = {});

std::string_view to_string(CodebookKind kind);
/// Accepts "uniform", "nf", "nf-zero" (and the to_string spellings).
CodebookKind parse_codebook_kind(std::string_view text);

/// Standard normal CDF.
double normal_cdf(double x);
/// Inverse standard normal CDF for p in (0, 1).
double normal_quantile(double p);

}  // namespace loftq
