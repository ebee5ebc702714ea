// Copyright (C) 2026 The loftq-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include "loftq/codebook.hpp"
#include "loftq/loftq.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace loftq {

enum class TensorRole : std::uint8_t { Attention = 0, FeedForward = 1, Embedding = 2, Other = 3 };

std::string_view to_string(TensorRole role);

struct TensorEntry {
    std::string name;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::optional<int> layer_index;
    TensorRole role = TensorRole::Other;

    std::size_t parameter_count() const noexcept { return rows * cols; }
    bool operator==(const TensorEntry&) const = default;
};

struct ModelManifest {
    std::vector<TensorEntry> tensors;

    std::size_t total_parameters() const noexcept;
    const TensorEntry* find(std::string_view name) const;
    /// Throws InvalidArgument on duplicate names or zero dimensions.
    void validate() const;
    bool operator==(const ModelManifest&) const = default;
};

/// Captures the layer number from tensor names such as
/// "model.layers.12.self_attn.q_proj.weight" or "encoder.layer.3.output.dense.weight".
inline constexpr std::string_view kDefaultLayerPattern = R"((?:^|\.)(?:layers?|h|blocks?)\.(\d+)(?:\.|$))";

std::optional<int> extract_layer_index(std::string_view name,
                                       std::string_view pattern = kDefaultLayerPattern);
TensorRole infer_role(std::string_view name);

/// Builds a manifest entry per tensor; 1-D shapes become 1 x n.
TensorEntry make_entry(std::string name, std::size_t rows, std::size_t cols,
                       std::string_view layer_pattern = kDefaultLayerPattern);

struct TensorPlan {
    bool process = false;
    int bits = 16;
    std::size_t rank = 0;
    CodebookKind codebook = CodebookKind::NormalFloat;
    std::size_t block_size = kDefaultBlockSize;

    bool operator==(const TensorPlan&) const = default;
};

struct PlanDefaults {
    int bits = 4;
    std::size_t rank = 16;
    CodebookKind codebook = CodebookKind::NormalFloat;
    std::size_t block_size = kDefaultBlockSize;
    int steps = 5;
    Variant variant = Variant::Standard;
    double quantile_clip = NormalFloatParams{}.quantile_clip;

    bool operator==(const PlanDefaults&) const = default;
};

/// First `cutoff` layers at high_bits, the rest at low_bits.
struct MixedPrecision {
    int cutoff = 0;
    int high_bits = 4;
    int low_bits = 2;

    bool operator==(const MixedPrecision&) const = default;
};

/// "k:high:low", e.g. "8:4:2".
MixedPrecision parse_mixed(std::string_view text);

/// Per-tensor field overrides applied after selection and mixed precision.
struct TensorOverride {
    std::optional<bool> process;
    std::optional<int> bits;
    std::optional<std::size_t> rank;
    std::optional<CodebookKind> codebook;
    std::optional<std::size_t> block_size;

    bool operator==(const TensorOverride&) const = default;
};

struct PlanRequest {
    /// Glob patterns (fnmatch syntax) over tensor names. Empty means every
    /// 2-D attention and feed-forward tensor.
    std::vector<std::string> selection;
    PlanDefaults defaults;
    std::optional<MixedPrecision> mixed;
    std::map<std::string, TensorOverride> overrides;

    bool operator==(const PlanRequest&) const = default;
};

struct QuantPlan {
    PlanDefaults defaults;
    std::map<std::string, TensorPlan> tensors;
    std::vector<std::string> warnings;

    const TensorPlan& at(std::string_view name) const;
    std::size_t processed_count() const;

    bool operator==(const QuantPlan&) const = default;
};

/// Tensors picked by the glob patterns (fnmatch syntax), in manifest order.
/// Empty patterns select every 2-D attention and feed-forward tensor.
/// Patterns that match nothing are reported through `warnings`.
std::vector<const TensorEntry*> select_tensors(const ModelManifest& manifest,
                                               const std::vector<std::string>& patterns,
                                               std::vector<std::string>* warnings = nullptr);

/// Throws InvalidPlan naming the tensor when a processed tensor has bits
/// outside [1, 8] or rank outside [1, min(rows, cols)].
QuantPlan build_plan(const ModelManifest& manifest, const PlanRequest& request);

struct CompressionReport {
    double compressed_bits_total = 0.0;
    double original_bits_total = 0.0;
    double ratio_percent = 100.0;
    double trainable_ratio_percent = 0.0;
    /// Mean bit width over processed parameters (e.g. 2.25 for 4 of 32 layers at 4 bits).
    double average_bits = 0.0;
};

/// Bits of one quantized tensor: codes, 32-bit scale records and the codebook
/// table (kind + bits bytes, 64-bit clip, 2^N 64-bit levels).
double quantized_tensor_bits(std::size_t rows, std::size_t cols, int bits, CodebookKind kind,
                             std::size_t block_size);
CompressionReport compression_ratio(const ModelManifest& manifest, const QuantPlan& plan);

/// Key-value plan file: global keys, repeated `select = pattern` lines and
/// `[tensor <name>]` sections with per-tensor overrides.
std::string format_plan_request(const PlanRequest& request);
PlanRequest parse_plan_request(std::string_view text);

}  // namespace loftq
