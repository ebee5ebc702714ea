// Copyright (C) 2026 The loftq-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include "loftq/codebook.hpp"
#include "loftq/loftq.hpp"
#include "loftq/planner.hpp"

#include <cstdint>
#include <exception>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace loftq::cli {

enum ExitCode : int {
    kExitOk = 0,
    kExitUsage = 1,
    kExitFormat = 2,
    kExitNumeric = 3,
};

/// Maps library exceptions onto exit codes: argument/plan errors -> 1,
/// format and I/O errors -> 2, numeric and convergence errors -> 3.
int exit_code_for(const std::exception& e);

struct RunConfig {
    std::filesystem::path input;
    std::filesystem::path output;
    std::filesystem::path checkpoint;
    std::filesystem::path plan;     // plan file; replaces the inline defaults below
    std::filesystem::path report;   // CSV report
    std::filesystem::path adapters; // optional adapter export

    int bits = 4;
    std::size_t rank = 16;
    int steps = 5;
    CodebookKind codebook = CodebookKind::NormalFloat;
    std::size_t block_size = kDefaultBlockSize;
    Variant variant = Variant::Standard;
    double quantile_clip = NormalFloatParams{}.quantile_clip;
    std::optional<MixedPrecision> mixed;
    std::vector<std::string> select;
    std::string layer_pattern{kDefaultLayerPattern};

    unsigned threads = 1;
    std::uint64_t seed = 0;
    double adapter_init_std = 0.01;

    /// Plan request assembled from the inline flags.
    PlanRequest plan_request() const;
};

struct SweepGrid {
    std::vector<int> bits{2, 4};
    std::vector<std::size_t> ranks{16};
    std::vector<int> steps{0, 1, 5};
    std::vector<CodebookKind> codebooks{CodebookKind::Uniform, CodebookKind::NormalFloat};
};

inline constexpr std::string_view kSweepCsvHeader = "tensor,codebook,bits,rank,T,frobenius,spectral,seconds";

/// Runs LoftQ on every planned tensor and writes the checkpoint to
/// cfg.output, wall times to "<output>.timing.json", and optionally the
/// adapters (cfg.adapters) and a discrepancy CSV (cfg.report).
int cmd_quantize(const RunConfig& cfg, std::ostream& out, std::ostream& err);

/// One CSV row per (tensor, codebook, bits, rank, T). Rows for every T > 0
/// come from a single run to max(T), observed at the requested steps.
int cmd_sweep(const RunConfig& cfg, const SweepGrid& grid, std::ostream& out, std::ostream& err);

/// Recomputes every stored objective from cfg.checkpoint and cfg.input.
int cmd_verify(const RunConfig& cfg, std::ostream& out, std::ostream& err);

/// Metadata, codebooks, compression ratio and recorded wall times.
int cmd_inspect(const std::filesystem::path& checkpoint, std::ostream& out, std::ostream& err);

/// Writes the resolved plan request for cfg.input to cfg.output (or `out`).
int cmd_plan(const RunConfig& cfg, std::ostream& out, std::ostream& err);

/// Manifest of a tensor container file.
ModelManifest manifest_of(const std::filesystem::path& path,
                          std::string_view layer_pattern = kDefaultLayerPattern);

std::filesystem::path timing_path(const std::filesystem::path& checkpoint);

}  // namespace loftq::cli
