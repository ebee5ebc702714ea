// Copyright (C) 2026 The loftq-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include "loftq/loftq.hpp"
#include "loftq/planner.hpp"
#include "loftq/quantizer.hpp"
#include "loftq/safetensors.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace loftq {

inline constexpr char kCheckpointMagic[4] = {'L', 'F', 'T', 'Q'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

/// One quantized weight matrix with its adapters, as stored on disk.
struct QuantizedTensor {
    std::string name;
    QuantizedMatrix q;
    MatrixF adapter_a;  // rows x rank
    MatrixF adapter_b;  // cols x rank
    int steps = 0;
    Variant variant = Variant::Standard;
    std::vector<TraceEntry> trace;
    /// ||W - dequantize(q) - A B^T||_F evaluated with the stored float32 adapters.
    double stored_objective = 0.0;

    std::size_t rank() const noexcept { return static_cast<std::size_t>(adapter_a.cols()); }
    LowRankFactors factors() const;
    bool operator==(const QuantizedTensor&) const = default;
};

struct QuantizedCheckpoint {
    std::uint16_t version = kCheckpointVersion;
    /// Plan file text the checkpoint was produced from.
    std::string plan_echo;
    /// Every tensor of the source model, processed or not.
    ModelManifest manifest;
    std::vector<QuantizedTensor> tensors;

    const QuantizedTensor* find(std::string_view name) const;
    /// Throws FormatError on any broken invariant (shapes, ranks, packed lengths...).
    void validate() const;
    bool operator==(const QuantizedCheckpoint&) const = default;
};

/// Packs a LoftqResult for storage: adapters rounded to float32 and the
/// objective re-evaluated against the rounded adapters.
QuantizedTensor make_quantized_tensor(std::string name, const Matrix& w, const LoftqResult& result,
                                      int steps, Variant variant);

std::vector<std::uint8_t> serialize_checkpoint(const QuantizedCheckpoint& ckpt);
QuantizedCheckpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes);

void write_checkpoint(const std::filesystem::path& path, const QuantizedCheckpoint& ckpt);
QuantizedCheckpoint read_checkpoint(const std::filesystem::path& path);

/// dequantize_matrix of the stored record.
Matrix reconstruct_backbone(const QuantizedCheckpoint& ckpt, std::string_view name);

/// Adapters as plain F32 tensors "<name>.lora_A" [rows, rank] and
/// "<name>.lora_B" [cols, rank] in the tensor container layout.
TensorContainer export_adapters(const QuantizedCheckpoint& ckpt);

}  // namespace loftq
