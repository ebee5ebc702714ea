// Copyright (C) 2026 The loftq-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include "loftq/lowrank.hpp"
#include "loftq/matrix.hpp"
#include "loftq/quantizer.hpp"

#include <cstdint>
#include <functional>
#include <string_view>
#include <vector>

namespace loftq {

enum class Variant : std::uint8_t {
    Standard = 0,      // quantize, then SVD of the quantization residual
    SwappedOrder = 1,  // SVD of the previous residual, then quantize
};

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view text);

struct LoftqConfig {
    QuantSpec quant;
    std::size_t rank = 16;
    int steps = 5;
    Variant variant = Variant::Standard;
    /// Stop once the objective improves by less than this fraction between
    /// steps. 0 disables early stopping (fixed-T loop).
    double early_stop_tol = 0.0;

    void validate() const;
};

struct TraceEntry {
    int step = 0;
    /// ||W - Q_t - A_t B_t^T||_F
    double objective = 0.0;
    /// ||W - Q_t||_F
    double residual_norm = 0.0;

    bool operator==(const TraceEntry&) const = default;
};

struct LoftqResult {
    QuantizedMatrix q;
    LowRankFactors factors;
    std::vector<TraceEntry> trace;

    double final_objective() const { return trace.empty() ? 0.0 : trace.back().objective; }
};

/// State after each alternating step, for callers that want per-step metrics
/// (the sweep reports discrepancies at several T from a single run).
struct StepState {
    int step;
    const Matrix& backbone;  // dequantized Q_t
    const LowRankFactors& factors;
    const TraceEntry& entry;
};
using StepObserver = std::function<void(const StepState&)>;

/// Alternating quantization / truncated SVD. steps == 0 yields q_N(W) with
/// zero factors and a single trace entry.
LoftqResult loftq_init(const Matrix& w, const LoftqConfig& cfg, const StepObserver& observer = {});

/// Same as loftq_init with the SVD step ahead of the quantization step.
LoftqResult loftq_variant_init(const Matrix& w, LoftqConfig cfg, const StepObserver& observer = {});

struct BaselineInitConfig {
    double adapter_init_std = 0.01;
    std::uint64_t seed = 0;

    void validate() const;
};

/// QLoRA-style start: Q = q_N(W), A ~ N(0, std^2) from `seed`, B = 0.
LoftqResult qlora_init(const Matrix& w, const QuantSpec& quant, std::size_t rank,
                       const BaselineInitConfig& base);

/// ||W - dequantize(q) - A B^T||_F
double objective(const Matrix& w, const QuantizedMatrix& q, const LowRankFactors& f);
double objective(const Matrix& w, const Matrix& backbone, const LowRankFactors& f);

/// X dequantize(q) + (X A) B^T without forming A B^T.
Matrix adapter_forward(const Matrix& x, const QuantizedMatrix& q, const LowRankFactors& f);

struct Discrepancy {
    double frobenius = 0.0;
    double spectral = 0.0;
};

Discrepancy discrepancy_report(const Matrix& w, const LoftqResult& result);
Discrepancy discrepancy(const Matrix& w, const Matrix& backbone, const LowRankFactors& f);

}  // namespace loftq
