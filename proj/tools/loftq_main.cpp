// Copyright (C) 2026 The loftq-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//
// loftq: quantize / sweep / verify / inspect / plan over tensor container files.

#include "loftq/cli/commands.hpp"
#include "loftq/cli/worker_pool.hpp"

#include "CLI11.hpp"

#include <iostream>

namespace {

using loftq::cli::RunConfig;

struct RawFlags {
    std::string codebook = "nf";
    std::string variant = "standard";
    std::string mixed;
    unsigned threads = 0;
};

void add_io(CLI::App& cmd, RunConfig& cfg) {
    cmd.add_option("--input", cfg.input, "Source tensor file (safetensors layout)")->required();
    cmd.add_option("--select", cfg.select, "Tensor name glob; repeatable");
    cmd.add_option("--threads", cfg.threads, "Worker threads (default: LOFTQ_THREADS or all cores)");
    cmd.add_option("--layer-pattern", cfg.layer_pattern, "Regex whose first group is the layer index");
}

void add_quant(CLI::App& cmd, RunConfig& cfg, RawFlags& raw) {
    cmd.add_option("--bits", cfg.bits, "Bit width");
    cmd.add_option("--rank", cfg.rank, "Adapter rank");
    cmd.add_option("--steps", cfg.steps, "Alternating steps T (0 = QLoRA baseline)");
    cmd.add_option("--codebook", raw.codebook, "uniform | nf | nf-zero");
    cmd.add_option("--block-size", cfg.block_size, "Quantization block size");
    cmd.add_option("--variant", raw.variant, "standard | swapped");
    cmd.add_option("--quantile-clip", cfg.quantile_clip, "NormalFloat tail clip");
    cmd.add_option("--mixed", raw.mixed, "k:high:low (first k layers at high bits)");
    cmd.add_option("--plan", cfg.plan, "Plan file; replaces the inline quantization flags");
}

void finish(RunConfig& cfg, const RawFlags& raw) {
    cfg.codebook = loftq::parse_codebook_kind(raw.codebook);
    cfg.variant = loftq::parse_variant(raw.variant);
    if (!raw.mixed.empty()) cfg.mixed = loftq::parse_mixed(raw.mixed);
    cfg.threads = loftq::cli::resolve_threads(cfg.threads);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"LoftQ quantization with low-rank adapter initialization"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "loftq 0.1.0");

    RunConfig cfg;
    cfg.threads = 0;
    RawFlags raw;

    auto* quantize = app.add_subcommand("quantize", "Quantize a model and initialize adapters");
    add_io(*quantize, cfg);
    add_quant(*quantize, cfg, raw);
    quantize->add_option("--output", cfg.output, "Checkpoint path")->required();
    quantize->add_option("--seed", cfg.seed, "Adapter seed for the T=0 baseline");
    quantize->add_option("--init-std", cfg.adapter_init_std, "Adapter A std for the T=0 baseline");
    quantize->add_option("--report", cfg.report, "Per-tensor discrepancy CSV");
    quantize->add_option("--adapters", cfg.adapters, "Write adapters as a tensor file");

    std::vector<int> sweep_bits{2, 4}, sweep_steps{0, 1, 5};
    std::vector<std::size_t> sweep_ranks{16};
    std::vector<std::string> sweep_codebooks{"uniform", "nf"};
    auto* sweep = app.add_subcommand("sweep", "Discrepancy over a grid of bits, ranks, T and codebooks");
    add_io(*sweep, cfg);
    sweep->add_option("--bits", sweep_bits, "Bit widths, comma separated")->delimiter(',');
    sweep->add_option("--rank", sweep_ranks, "Ranks, comma separated")->delimiter(',');
    sweep->add_option("--steps", sweep_steps, "Step counts, comma separated")->delimiter(',');
    sweep->add_option("--codebook", sweep_codebooks, "Codebooks, comma separated")->delimiter(',');
    sweep->add_option("--block-size", cfg.block_size, "Quantization block size");
    sweep->add_option("--variant", raw.variant, "standard | swapped");
    sweep->add_option("--quantile-clip", cfg.quantile_clip, "NormalFloat tail clip");
    sweep->add_option("--report", cfg.report, "CSV path (default: stdout)");

    auto* verify = app.add_subcommand("verify", "Recompute stored objectives from the source weights");
    add_io(*verify, cfg);
    verify->add_option("--checkpoint,--output", cfg.checkpoint, "Checkpoint path")->required();

    std::filesystem::path inspect_path;
    auto* inspect = app.add_subcommand("inspect", "Print checkpoint metadata, codebooks and timings");
    inspect->add_option("checkpoint,--checkpoint", inspect_path, "Checkpoint path")->required();

    auto* plan = app.add_subcommand("plan", "Resolve and write a plan file");
    add_io(*plan, cfg);
    add_quant(*plan, cfg, raw);
    plan->add_option("--output", cfg.output, "Plan file path (default: stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return loftq::cli::kExitUsage;
    }

    try {
        if (*inspect) return loftq::cli::cmd_inspect(inspect_path, std::cout, std::cerr);
        finish(cfg, raw);
        if (*quantize) return loftq::cli::cmd_quantize(cfg, std::cout, std::cerr);
        if (*verify) return loftq::cli::cmd_verify(cfg, std::cout, std::cerr);
        if (*plan) return loftq::cli::cmd_plan(cfg, std::cout, std::cerr);
        loftq::cli::SweepGrid grid;
        grid.bits = sweep_bits;
        grid.ranks = sweep_ranks;
        grid.steps = sweep_steps;
        grid.codebooks.clear();
        for (const auto& c : sweep_codebooks) grid.codebooks.push_back(loftq::parse_codebook_kind(c));
        return loftq::cli::cmd_sweep(cfg, grid, std::cout, std::cerr);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return loftq::cli::exit_code_for(e);
    }
}
