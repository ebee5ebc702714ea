// Copyright (C) 2026 The loftq-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "loftq/codebook.hpp"

#include "loftq/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace loftq {

namespace {

void require_bits(int bits) {
    if (bits < kMinBits || bits > kMaxBits) {
        throw InvalidArgument("codebook bits must be in [1, 8], got " + std::to_string(bits));
    }
}

bool is_normalfloat(CodebookKind kind) {
    return kind == CodebookKind::NormalFloat || kind == CodebookKind::NormalFloatZero;
}

// Acklam's rational approximation, good to ~1.15e-9 before refinement.
double acklam_quantile(double p) {
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                   -2.759285104469687e+02, 1.383577518672690e+02,
                                   -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                   -1.556989798598866e+02, 6.680131188771972e+01,
                                   -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                   -2.400758277161838e+00, -2.549732539343734e+00,
                                   4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                   2.445134137142996e+00, 3.754408661907416e+00};
    constexpr double p_low = 0.02425;

    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    if (p > 1.0 - p_low) {
        const double q = std::sqrt(-2.0 * std::log1p(-p));
        return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    const double q = p - 0.5;
    const double r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

std::vector<double> symmetric_normal_levels(int bits, double clip) {
    const std::size_t n = std::size_t{1} << bits;
    const double step = (1.0 - 2.0 * clip) / static_cast<double>(n - 1);
    std::vector<double> levels(n);
    // Lower half from lower-tail probabilities, upper half mirrored so the
    // table is exactly odd-symmetric.
    for (std::size_t i = 0; i < n / 2; ++i) {
        levels[i] = normal_quantile(clip + static_cast<double>(i) * step);
    }
    const double scale = -levels[0];
    for (std::size_t i = 0; i < n / 2; ++i) {
        levels[i] /= scale;
        levels[n - 1 - i] = -levels[i];
    }
    levels[0] = -1.0;
    levels[n - 1] = 1.0;
    return levels;
}

std::vector<double> zero_level_normal_levels(int bits, double clip) {
    if (bits < 2) {
        throw InvalidArgument("zero-level NormalFloat codebook needs at least 2 bits");
    }
    const std::size_t half = std::size_t{1} << (bits - 1);
    const double scale = -normal_quantile(clip);
    std::vector<double> levels;
    levels.reserve(2 * half);
    // Positive side: quantiles at 1-clip .. just above 0.5, `half` of them.
    for (std::size_t j = 0; j < half; ++j) {
        const double p = clip + static_cast<double>(j) * (0.5 - clip) / static_cast<double>(half);
        levels.push_back(-normal_quantile(p) / scale);
    }
    // Negative side has one fewer slot to make room for zero.
    for (std::size_t j = 0; j + 1 < half; ++j) {
        const double p = clip + static_cast<double>(j) * (0.5 - clip) / static_cast<double>(half - 1);
        levels.push_back(normal_quantile(p) / scale);
    }
    levels.push_back(0.0);
    std::sort(levels.begin(), levels.end());
    levels.back() = 1.0;
    levels.front() = -1.0;
    return levels;
}

}  // namespace

void NormalFloatParams::validate() const {
    if (!(quantile_clip > 0.0 && quantile_clip < 0.5)) {
        throw InvalidArgument("NormalFloat quantile clip must lie in (0, 0.5), got " +
                              std::to_string(quantile_clip));
    }
    if (!(sigma > 0.0) || !std::isfinite(sigma)) {
        throw InvalidArgument("NormalFloat sigma must be positive");
    }
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        throw InvalidArgument("normal quantile needs p in (0, 1), got " + std::to_string(p));
    }
    // 1 - p is exact here, so the upper tail keeps full precision.
    if (p > 0.5) return -normal_quantile(1.0 - p);
    double x = acklam_quantile(p);
    // One Halley step against erfc brings the error to a few ulps.
    const double e = normal_cdf(x) - p;
    const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
    x = x - u / (1.0 + 0.5 * x * u);
    return x;
}

Codebook::Codebook(CodebookKind kind, int bits, double quantile_clip, std::vector<double> levels)
    : kind_(kind), bits_(bits), quantile_clip_(quantile_clip), levels_(std::move(levels)) {
    if (bits < kMinBits || bits > kMaxBits) {
        throw FormatError("codebook bits out of range: " + std::to_string(bits));
    }
    if (levels_.size() != (std::size_t{1} << bits)) {
        throw FormatError("codebook must have 2^bits levels");
    }
    for (std::size_t i = 0; i < levels_.size(); ++i) {
        if (!std::isfinite(levels_[i])) throw FormatError("codebook level is not finite");
        if (i > 0 && !(levels_[i - 1] < levels_[i])) {
            throw FormatError("codebook levels must be strictly increasing");
        }
    }
    switch (kind) {
        case CodebookKind::Uniform:
            if (levels_.front() != 0.0 || levels_.back() != 1.0) {
                throw FormatError("uniform codebook must span [0, 1]");
            }
            break;
        case CodebookKind::NormalFloat:
        case CodebookKind::NormalFloatZero:
            if (levels_.front() != -1.0 || levels_.back() != 1.0) {
                throw FormatError("NormalFloat codebook must span [-1, 1]");
            }
            if (!(quantile_clip > 0.0 && quantile_clip < 0.5)) {
                throw FormatError("NormalFloat codebook quantile clip outside (0, 0.5)");
            }
            break;
        default:
            throw FormatError("unknown codebook kind tag " +
                              std::to_string(static_cast<int>(kind)));
    }
}

Normalization Codebook::normalization() const noexcept {
    return kind_ == CodebookKind::Uniform ? Normalization::MinMax : Normalization::AbsMax;
}

std::uint8_t Codebook::encode(double x, EncodeRule rule) const {
    if (std::isnan(x)) return 0;
    x = std::clamp(x, domain_min(), domain_max());
    if (rule == EncodeRule::NearestLevel) return encode_nearest(x);
    if (kind_ == CodebookKind::NormalFloatZero) {
        throw InvalidArgument("F-space rounding is undefined for the zero-level NormalFloat table");
    }
    return encode_fspace(x);
}

std::uint8_t Codebook::encode_nearest(double x) const noexcept {
    const auto it = std::upper_bound(levels_.begin(), levels_.end(), x);
    if (it == levels_.begin()) return 0;
    if (it == levels_.end()) return static_cast<std::uint8_t>(max_code());
    const auto hi = static_cast<std::size_t>(it - levels_.begin());
    const std::size_t lo = hi - 1;
    return static_cast<std::uint8_t>(levels_[hi] - x <= x - levels_[lo] ? hi : lo);
}

std::uint8_t Codebook::encode_fspace(double x) const noexcept {
    const double top = static_cast<double>(max_code());
    double f = x;
    if (is_normalfloat(kind_)) {
        const double scale = -normal_quantile(quantile_clip_);
        const double p = normal_cdf(x * scale);
        f = (p - quantile_clip_) / (1.0 - 2.0 * quantile_clip_);
    }
    const double code = std::round(top * f);
    return static_cast<std::uint8_t>(std::clamp(code, 0.0, top));
}

double Codebook::decode(std::uint32_t code) const {
    if (code > max_code()) {
        throw InvalidArgument("code " + std::to_string(code) + " out of range for " +
                              std::to_string(bits_) + "-bit codebook");
    }
    return levels_[code];
}

Codebook build_uniform_codebook(int bits) {
    require_bits(bits);
    const std::size_t n = std::size_t{1} << bits;
    std::vector<double> levels(n);
    for (std::size_t i = 0; i < n; ++i) {
        levels[i] = static_cast<double>(i) / static_cast<double>(n - 1);
    }
    return Codebook(CodebookKind::Uniform, bits, 0.0, std::move(levels));
}

Codebook build_normalfloat_codebook(int bits, const NormalFloatParams& params) {
    require_bits(bits);
    params.validate();
    if (params.zero_level) {
        return Codebook(CodebookKind::NormalFloatZero, bits, params.quantile_clip,
                        zero_level_normal_levels(bits, params.quantile_clip));
    }
    return Codebook(CodebookKind::NormalFloat, bits, params.quantile_clip,
                    symmetric_normal_levels(bits, params.quantile_clip));
}

Codebook make_codebook(CodebookKind kind, int bits, const NormalFloatParams& params) {
    switch (kind) {
        case CodebookKind::Uniform:
            return build_uniform_codebook(bits);
        case CodebookKind::NormalFloat: {
            NormalFloatParams p = params;
            p.zero_level = false;
            return build_normalfloat_codebook(bits, p);
        }
        case CodebookKind::NormalFloatZero: {
            NormalFloatParams p = params;
            p.zero_level = true;
            return build_normalfloat_codebook(bits, p);
        }
    }
    throw InvalidArgument("unknown codebook kind");
}

std::string_view to_string(CodebookKind kind) {
    switch (kind) {
        case CodebookKind::Uniform: return "uniform";
        case CodebookKind::NormalFloat: return "nf";
        case CodebookKind::NormalFloatZero: return "nf-zero";
    }
    return "unknown";
}

CodebookKind parse_codebook_kind(std::string_view text) {
    if (text == "uniform") return CodebookKind::Uniform;
    if (text == "nf" || text == "normalfloat") return CodebookKind::NormalFloat;
    if (text == "nf-zero") return CodebookKind::NormalFloatZero;
    throw InvalidArgument("unknown codebook '" + std::string(text) + "' (expected uniform|nf|nf-zero)");
}

}  // namespace loftq
