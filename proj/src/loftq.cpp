// Copyright (C) 2026 The loftq-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "loftq/loftq.hpp"

#include "loftq/error.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace loftq {

namespace {

constexpr double kSpectralTol = 1e-9;
constexpr int kSpectralMaxIters = 200000;

void require_rank_fits(const Matrix& w, std::size_t rank) {
    const auto d = static_cast<std::size_t>(std::min(w.rows(), w.cols()));
    if (rank < 1 || rank > d) {
        throw InvalidArgument("rank " + std::to_string(rank) + " outside [1, " + std::to_string(d) +
                              "] for a " + std::to_string(w.rows()) + "x" + std::to_string(w.cols()) +
                              " matrix");
    }
}

void require_factor_shapes(Eigen::Index rows, Eigen::Index cols, const LowRankFactors& f) {
    if (f.A.rows() != rows || f.B.rows() != cols || f.A.cols() != f.B.cols()) {
        throw InvalidArgument("low-rank factor shapes A " + std::to_string(f.A.rows()) + "x" +
                              std::to_string(f.A.cols()) + ", B " + std::to_string(f.B.rows()) + "x" +
                              std::to_string(f.B.cols()) + " do not match a " + std::to_string(rows) +
                              "x" + std::to_string(cols) + " backbone");
    }
}

bool should_stop(const LoftqConfig& cfg, const std::vector<TraceEntry>& trace) {
    if (cfg.early_stop_tol <= 0.0 || trace.size() < 2) return false;
    const double prev = trace[trace.size() - 2].objective;
    const double cur = trace.back().objective;
    return prev - cur < cfg.early_stop_tol * prev;
}

void prepare(const Matrix& w, const LoftqConfig& cfg) {
    cfg.validate();
    require_finite(w, "weight matrix");
    require_rank_fits(w, cfg.rank);
}

LoftqResult baseline_only(const Matrix& w, const LoftqConfig& cfg, const StepObserver& observer) {
    LoftqResult out{quantize_matrix(w, cfg.quant),
                    LowRankFactors::zeros(static_cast<std::size_t>(w.rows()),
                                          static_cast<std::size_t>(w.cols()), cfg.rank),
                    {}};
    const Matrix backbone = dequantize_matrix(out.q);
    const double r = (w - backbone).norm();
    out.trace.push_back({0, r, r});
    if (observer) observer({0, backbone, out.factors, out.trace.back()});
    return out;
}

}  // namespace

std::string_view to_string(Variant v) {
    return v == Variant::Standard ? "standard" : "swapped";
}

Variant parse_variant(std::string_view text) {
    if (text == "standard") return Variant::Standard;
    if (text == "swapped") return Variant::SwappedOrder;
    throw InvalidArgument("unknown variant '" + std::string(text) + "' (expected standard|swapped)");
}

void LoftqConfig::validate() const {
    if (rank < 1) throw InvalidArgument("rank must be at least 1");
    if (steps < 0) throw InvalidArgument("alternating steps must be non-negative");
    if (quant.block_size == 0) throw InvalidArgument("block size must be positive");
    if (early_stop_tol < 0.0) throw InvalidArgument("early-stop tolerance must be non-negative");
}

void BaselineInitConfig::validate() const {
    if (!(adapter_init_std > 0.0) || !std::isfinite(adapter_init_std)) {
        throw InvalidArgument("adapter init std must be positive");
    }
}

LoftqResult loftq_init(const Matrix& w, const LoftqConfig& cfg, const StepObserver& observer) {
    if (cfg.variant == Variant::SwappedOrder) return loftq_variant_init(w, cfg, observer);
    prepare(w, cfg);
    if (cfg.steps == 0) return baseline_only(w, cfg, observer);

    LoftqResult out;
    Matrix low_rank = Matrix::Zero(w.rows(), w.cols());  // A_{t-1} B_{t-1}^T
    for (int t = 1; t <= cfg.steps; ++t) {
        out.q = quantize_matrix(w - low_rank, cfg.quant);
        const Matrix backbone = dequantize_matrix(out.q);
        const Matrix residual = w - backbone;
        out.factors = truncated_factors(residual, cfg.rank);
        low_rank = out.factors.product();
        out.trace.push_back({t, (residual - low_rank).norm(), residual.norm()});
        if (observer) observer({t, backbone, out.factors, out.trace.back()});
        if (should_stop(cfg, out.trace)) break;
    }
    return out;
}

LoftqResult loftq_variant_init(const Matrix& w, LoftqConfig cfg, const StepObserver& observer) {
    cfg.variant = Variant::SwappedOrder;
    prepare(w, cfg);
    if (cfg.steps == 0) return baseline_only(w, cfg, observer);

    LoftqResult out;
    out.q = quantize_matrix(w, cfg.quant);  // Q_0 = q_N(W)
    Matrix backbone = dequantize_matrix(out.q);
    for (int t = 1; t <= cfg.steps; ++t) {
        out.factors = truncated_factors(w - backbone, cfg.rank);
        const Matrix low_rank = out.factors.product();
        out.q = quantize_matrix(w - low_rank, cfg.quant);
        backbone = dequantize_matrix(out.q);
        const Matrix residual = w - backbone;
        out.trace.push_back({t, (residual - low_rank).norm(), residual.norm()});
        if (observer) observer({t, backbone, out.factors, out.trace.back()});
        if (should_stop(cfg, out.trace)) break;
    }
    return out;
}

LoftqResult qlora_init(const Matrix& w, const QuantSpec& quant, std::size_t rank,
                       const BaselineInitConfig& base) {
    base.validate();
    require_finite(w, "weight matrix");
    require_rank_fits(w, rank);

    LoftqResult out{quantize_matrix(w, quant),
                    LowRankFactors::zeros(static_cast<std::size_t>(w.rows()),
                                          static_cast<std::size_t>(w.cols()), rank),
                    {}};
    std::mt19937_64 rng(base.seed);
    std::normal_distribution<double> normal(0.0, base.adapter_init_std);
    for (Eigen::Index i = 0; i < out.factors.A.size(); ++i) out.factors.A.data()[i] = normal(rng);

    const double r = (w - dequantize_matrix(out.q)).norm();
    out.trace.push_back({0, r, r});
    return out;
}

double objective(const Matrix& w, const Matrix& backbone, const LowRankFactors& f) {
    if (backbone.rows() != w.rows() || backbone.cols() != w.cols()) {
        throw InvalidArgument("backbone shape does not match the weight matrix");
    }
    require_factor_shapes(w.rows(), w.cols(), f);
    const Matrix low_rank = f.A * f.B.transpose();
    return (w - backbone - low_rank).norm();
}

double objective(const Matrix& w, const QuantizedMatrix& q, const LowRankFactors& f) {
    if (q.rows != static_cast<std::size_t>(w.rows()) || q.cols != static_cast<std::size_t>(w.cols())) {
        throw InvalidArgument("quantized matrix shape does not match the weight matrix");
    }
    return objective(w, dequantize_matrix(q), f);
}

Matrix adapter_forward(const Matrix& x, const QuantizedMatrix& q, const LowRankFactors& f) {
    const auto rows = static_cast<Eigen::Index>(q.rows);
    const auto cols = static_cast<Eigen::Index>(q.cols);
    if (x.cols() != rows) {
        throw InvalidArgument("input has " + std::to_string(x.cols()) + " features, backbone expects " +
                              std::to_string(rows));
    }
    require_factor_shapes(rows, cols, f);
    const Matrix xa = x * f.A;
    return x * dequantize_matrix(q) + xa * f.B.transpose();
}

Discrepancy discrepancy(const Matrix& w, const Matrix& backbone, const LowRankFactors& f) {
    require_factor_shapes(w.rows(), w.cols(), f);
    const Matrix diff = w - backbone - f.A * f.B.transpose();
    return {diff.norm(), spectral_norm(diff, kSpectralTol, kSpectralMaxIters)};
}

Discrepancy discrepancy_report(const Matrix& w, const LoftqResult& result) {
    if (result.q.rows != static_cast<std::size_t>(w.rows()) ||
        result.q.cols != static_cast<std::size_t>(w.cols())) {
        throw InvalidArgument("result shape does not match the weight matrix");
    }
    return discrepancy(w, dequantize_matrix(result.q), result.factors);
}

}  // namespace loftq
