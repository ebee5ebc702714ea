// Copyright (C) 2026 The loftq-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "loftq/cli/commands.hpp"

#include "loftq/checkpoint.hpp"
#include "loftq/cli/worker_pool.hpp"
#include "loftq/error.hpp"
#include "loftq/safetensors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

namespace loftq::cli {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Shortest round-trip form; locale independent.
std::string fmt(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

std::string fmt_fixed(double v, int precision) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, precision);
    return std::string(buf, end);
}

// Rethrows the in-flight exception with the tensor name prepended, keeping its type.
[[noreturn]] void rethrow_scoped(const std::string& tensor) {
    const std::string p = "tensor '" + tensor + "': ";
    try {
        throw;
    } catch (const InvalidPlan& e) {
        throw InvalidPlan(p + e.what());
    } catch (const InvalidArgument& e) {
        throw InvalidArgument(p + e.what());
    } catch (const InvalidInput& e) {
        throw InvalidInput(p + e.what());
    } catch (const FormatError& e) {
        throw FormatError(p + e.what());
    } catch (const IoError& e) {
        throw IoError(p + e.what());
    } catch (const ConvergenceError& e) {
        throw ConvergenceError(p + e.what(), e.last_estimate());
    } catch (const std::exception& e) {
        throw Error(p + e.what());
    }
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const std::filesystem::path& path, std::string_view text) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write " + path.string());
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!os) throw IoError("write failed: " + path.string());
}

void require_path(const std::filesystem::path& p, std::string_view flag) {
    if (p.empty()) throw InvalidArgument(std::string(flag) + " is required");
}

PlanRequest load_request(const RunConfig& cfg) {
    return cfg.plan.empty() ? cfg.plan_request() : parse_plan_request(read_text(cfg.plan));
}

QuantSpec spec_for(const TensorPlan& tp, double quantile_clip) {
    NormalFloatParams nf;
    nf.quantile_clip = quantile_clip;
    return QuantSpec{make_codebook(tp.codebook, tp.bits, nf), tp.block_size};
}

int report_error(const std::exception& e, std::ostream& err) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
}

}  // namespace

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const InvalidArgument*>(&e)) return kExitUsage;
    if (dynamic_cast<const FormatError*>(&e) || dynamic_cast<const IoError*>(&e)) return kExitFormat;
    return kExitNumeric;
}

PlanRequest RunConfig::plan_request() const {
    PlanRequest req;
    req.selection = select;
    req.defaults.bits = bits;
    req.defaults.rank = rank;
    req.defaults.codebook = codebook;
    req.defaults.block_size = block_size;
    req.defaults.steps = steps;
    req.defaults.variant = variant;
    req.defaults.quantile_clip = quantile_clip;
    req.mixed = mixed;
    return req;
}

ModelManifest manifest_of(const std::filesystem::path& path, std::string_view layer_pattern) {
    const TensorFile file(path);
    ModelManifest m;
    for (const auto& info : file.tensors()) {
        const auto [rows, cols] = info.matrix_shape();
        m.tensors.push_back(make_entry(info.name, rows, cols, layer_pattern));
    }
    m.validate();
    return m;
}

std::filesystem::path timing_path(const std::filesystem::path& checkpoint) {
    return checkpoint.string() + ".timing.json";
}

int cmd_quantize(const RunConfig& cfg, std::ostream& out, std::ostream& err) try {
    require_path(cfg.input, "--input");
    require_path(cfg.output, "--output");
    const PlanRequest req = load_request(cfg);
    if (req.defaults.steps < 0) throw InvalidArgument("--steps must be >= 0");

    const TensorFile file(cfg.input);
    const ModelManifest manifest = manifest_of(cfg.input, cfg.layer_pattern);
    const QuantPlan plan = build_plan(manifest, req);
    for (const auto& w : plan.warnings) err << "warning: " << w << '\n';

    std::vector<std::size_t> jobs;  // manifest indices
    for (std::size_t i = 0; i < manifest.tensors.size(); ++i)
        if (plan.at(manifest.tensors[i].name).process) jobs.push_back(i);

    struct Outcome {
        QuantizedTensor tensor;
        double objective = 0.0;
        Discrepancy disc;
        double seconds = 0.0;
    };
    std::vector<Outcome> results(jobs.size());
    const int steps = req.defaults.steps;
    const Variant variant = req.defaults.variant;
    const bool want_spectral = !cfg.report.empty();

    parallel_for(jobs.size(), std::max(1u, cfg.threads), [&](std::size_t j) {
        const TensorEntry& e = manifest.tensors[jobs[j]];
        try {
            const TensorPlan& tp = plan.at(e.name);
            const Matrix w = file.read_matrix(e.name);
            const QuantSpec spec = spec_for(tp, req.defaults.quantile_clip);
            const auto t0 = Clock::now();
            LoftqResult r;
            if (steps == 0) {
                BaselineInitConfig base{cfg.adapter_init_std, cfg.seed + jobs[j]};
                r = qlora_init(w, spec, tp.rank, base);
            } else {
                r = loftq_init(w, LoftqConfig{spec, tp.rank, steps, variant});
            }
            results[j].seconds = seconds_since(t0);
            results[j].objective = r.final_objective();
            results[j].tensor = make_quantized_tensor(e.name, w, r, steps, variant);
            if (want_spectral) results[j].disc = discrepancy(w, dequantize_matrix(r.q), r.factors);
        } catch (...) {
            rethrow_scoped(e.name);
        }
    });

    QuantizedCheckpoint ckpt;
    ckpt.plan_echo = format_plan_request(req);
    ckpt.manifest = manifest;
    for (auto& r : results) ckpt.tensors.push_back(r.tensor);
    write_checkpoint(cfg.output, ckpt);

    nlohmann::ordered_json timing = nlohmann::ordered_json::object();
    for (const auto& r : results) timing[r.tensor.name] = r.seconds;
    write_text(timing_path(cfg.output), timing.dump(2) + "\n");

    if (!cfg.adapters.empty()) write_tensors(cfg.adapters, export_adapters(ckpt));

    if (want_spectral) {
        std::string csv = std::string(kSweepCsvHeader) + '\n';
        for (const auto& r : results) {
            const auto& t = r.tensor;
            csv += t.name + ',' + std::string(to_string(t.q.codebook.kind())) + ',' +
                   std::to_string(t.q.codebook.bits()) + ',' + std::to_string(t.rank()) + ',' +
                   std::to_string(steps) + ',' + fmt(r.disc.frobenius) + ',' + fmt(r.disc.spectral) + ',' +
                   fmt_fixed(r.seconds, 6) + '\n';
        }
        write_text(cfg.report, csv);
    }

    for (const auto& r : results) {
        out << r.tensor.name << " bits=" << r.tensor.q.codebook.bits() << " rank=" << r.tensor.rank()
            << " T=" << steps << " frobenius=" << fmt(r.objective) << " seconds=" << fmt_fixed(r.seconds, 3)
            << '\n';
    }
    if (results.empty()) err << "warning: no tensors selected for quantization\n";
    return kExitOk;
} catch (const std::exception& e) {
    return report_error(e, err);
}

int cmd_sweep(const RunConfig& cfg, const SweepGrid& grid, std::ostream& out, std::ostream& err) try {
    require_path(cfg.input, "--input");
    if (grid.bits.empty() || grid.ranks.empty() || grid.steps.empty() || grid.codebooks.empty())
        throw InvalidArgument("sweep grid must be non-empty in every dimension");
    for (int t : grid.steps)
        if (t < 0) throw InvalidArgument("sweep step counts must be >= 0");

    const TensorFile file(cfg.input);
    const ModelManifest manifest = manifest_of(cfg.input, cfg.layer_pattern);
    std::vector<std::string> warnings;
    const auto selected = select_tensors(manifest, cfg.select, &warnings);
    for (const auto& w : warnings) err << "warning: " << w << '\n';

    std::ofstream file_sink;
    if (!cfg.report.empty()) {
        file_sink.open(cfg.report, std::ios::binary | std::ios::trunc);
        if (!file_sink) throw IoError("cannot write " + cfg.report.string());
    }
    std::ostream& csv = cfg.report.empty() ? out : file_sink;
    csv << kSweepCsvHeader << '\n';
    if (selected.empty()) {
        err << "warning: tensor selection is empty\n";
        return kExitOk;
    }

    struct Cell {
        const TensorEntry* entry;
        CodebookKind codebook;
        int bits;
        std::size_t rank;
    };
    std::vector<Cell> cells;
    for (const auto* e : selected)
        for (auto cb : grid.codebooks)
            for (int b : grid.bits)
                for (auto r : grid.ranks) cells.push_back({e, cb, b, r});

    const std::set<int> wanted(grid.steps.begin(), grid.steps.end());
    const int max_steps = *wanted.rbegin();
    std::vector<std::string> rows(cells.size());

    parallel_for(cells.size(), std::max(1u, cfg.threads), [&](std::size_t c) {
        const Cell& cell = cells[c];
        try {
            const Matrix w = file.read_matrix(cell.entry->name);
            TensorPlan tp;
            tp.bits = cell.bits;
            tp.codebook = cell.codebook;
            tp.block_size = cfg.block_size;
            tp.rank = cell.rank;
            const QuantSpec spec = spec_for(tp, cfg.quantile_clip);

            std::map<int, std::pair<Discrepancy, double>> at;
            if (wanted.contains(0)) {
                const auto t0 = Clock::now();
                const Matrix backbone = dequantize_matrix(quantize_matrix(w, spec));
                const double secs = seconds_since(t0);
                const auto zero = LowRankFactors::zeros(w.rows(), w.cols(), cell.rank);
                at[0] = {discrepancy(w, backbone, zero), secs};
            }
            if (max_steps > 0) {
                double observer_seconds = 0.0;
                const auto t0 = Clock::now();
                const StepObserver observe = [&](const StepState& s) {
                    if (!wanted.contains(s.step)) return;
                    const auto o0 = Clock::now();
                    const double elapsed = std::chrono::duration<double>(o0 - t0).count() - observer_seconds;
                    at[s.step] = {discrepancy(w, s.backbone, s.factors), elapsed};
                    observer_seconds += seconds_since(o0);
                };
                loftq_init(w, LoftqConfig{spec, cell.rank, max_steps, cfg.variant}, observe);
            }

            const std::string prefix = cell.entry->name + ',' + std::string(to_string(cell.codebook)) + ',' +
                                       std::to_string(cell.bits) + ',' + std::to_string(cell.rank) + ',';
            std::string text;
            for (int t : grid.steps) {
                const auto& [d, secs] = at.at(t);
                text += prefix + std::to_string(t) + ',' + fmt(d.frobenius) + ',' + fmt(d.spectral) + ',' +
                        fmt_fixed(secs, 6) + '\n';
            }
            rows[c] = std::move(text);
        } catch (...) {
            rethrow_scoped(cell.entry->name);
        }
    });

    for (const auto& r : rows) csv << r;
    csv.flush();
    if (!csv) throw IoError("failed to write sweep CSV");
    return kExitOk;
} catch (const std::exception& e) {
    return report_error(e, err);
}

int cmd_verify(const RunConfig& cfg, std::ostream& out, std::ostream& err) try {
    const std::filesystem::path path = cfg.checkpoint.empty() ? cfg.output : cfg.checkpoint;
    require_path(path, "--checkpoint");
    require_path(cfg.input, "--input");

    const QuantizedCheckpoint ckpt = read_checkpoint(path);
    const TensorFile file(cfg.input);

    struct Check {
        double recomputed = 0.0;
        std::string problem;
    };
    std::vector<Check> checks(ckpt.tensors.size());
    parallel_for(ckpt.tensors.size(), std::max(1u, cfg.threads), [&](std::size_t i) {
        const QuantizedTensor& t = ckpt.tensors[i];
        Check& c = checks[i];
        const auto& infos = file.tensors();
        if (std::none_of(infos.begin(), infos.end(), [&](const TensorInfo& x) { return x.name == t.name; })) {
            c.problem = "missing from input";
            return;
        }
        const Matrix w = file.read_matrix(t.name);
        if (static_cast<std::size_t>(w.rows()) != t.q.rows || static_cast<std::size_t>(w.cols()) != t.q.cols) {
            c.problem = "shape differs from input";
            return;
        }
        const std::size_t expected_trace = static_cast<std::size_t>(std::max(t.steps, 1));
        if (t.trace.empty() || t.trace.size() > expected_trace) {
            c.problem = "trace length " + std::to_string(t.trace.size()) + " inconsistent with T=" +
                        std::to_string(t.steps);
            return;
        }
        c.recomputed = objective(w, t.q, t.factors());
        const double tol = 1e-8 * std::max(1.0, std::abs(t.stored_objective));
        if (!(std::abs(c.recomputed - t.stored_objective) <= tol))
            c.problem = "objective " + fmt(c.recomputed) + " != stored " + fmt(t.stored_objective);
    });

    std::vector<std::string> bad;
    for (std::size_t i = 0; i < checks.size(); ++i) {
        const auto& t = ckpt.tensors[i];
        if (checks[i].problem.empty()) {
            out << "ok " << t.name << " objective=" << fmt(checks[i].recomputed) << '\n';
        } else {
            out << "MISMATCH " << t.name << ": " << checks[i].problem << '\n';
            bad.push_back(t.name);
        }
    }
    if (!bad.empty()) {
        err << "error: " << bad.size() << " tensor(s) failed verification:";
        for (const auto& n : bad) err << ' ' << n;
        err << '\n';
        return kExitNumeric;
    }
    return kExitOk;
} catch (const std::exception& e) {
    return report_error(e, err);
}

int cmd_inspect(const std::filesystem::path& checkpoint, std::ostream& out, std::ostream& err) try {
    require_path(checkpoint, "--checkpoint");
    const QuantizedCheckpoint ckpt = read_checkpoint(checkpoint);

    out << "format: LFTQ v" << ckpt.version << '\n';
    out << "tensors: " << ckpt.tensors.size() << " quantized of " << ckpt.manifest.tensors.size() << '\n';
    out << "plan:\n";
    std::istringstream plan_lines(ckpt.plan_echo);
    for (std::string line; std::getline(plan_lines, line);) out << "  " << line << '\n';

    out << '\n'
        << std::left << std::setw(40) << "name" << std::setw(12) << "shape" << std::setw(6) << "bits"
        << std::setw(9) << "codebook" << std::setw(7) << "block" << std::setw(6) << "rank" << std::setw(4) << "T"
        << std::setw(10) << "variant" << "objective\n";
    for (const auto& t : ckpt.tensors) {
        std::ostringstream obj;
        obj << std::scientific << std::setprecision(6) << t.stored_objective;
        out << std::left << std::setw(40) << t.name << std::setw(12)
            << (std::to_string(t.q.rows) + "x" + std::to_string(t.q.cols)) << std::setw(6) << t.q.codebook.bits()
            << std::setw(9) << to_string(t.q.codebook.kind()) << std::setw(7) << t.q.block_size << std::setw(6)
            << t.rank() << std::setw(4) << t.steps << std::setw(10) << to_string(t.variant) << obj.str() << '\n';
    }

    out << "\ncodebooks:\n";
    std::vector<const Codebook*> seen;
    for (const auto& t : ckpt.tensors) {
        const Codebook& cb = t.q.codebook;
        if (std::any_of(seen.begin(), seen.end(), [&](const Codebook* s) { return *s == cb; })) continue;
        seen.push_back(&cb);
        out << "  " << to_string(cb.kind()) << ' ' << cb.bits() << "-bit";
        if (cb.kind() != CodebookKind::Uniform) out << " (clip " << fmt(cb.quantile_clip()) << ')';
        out << ':';
        const auto& lv = cb.levels();
        for (std::size_t i = 0; i < lv.size(); ++i) {
            if (i % 8 == 0 && i > 0) out << "\n   ";
            out << ' ' << fmt_fixed(lv[i], 6);
        }
        out << '\n';
    }

    QuantPlan plan;
    for (const auto& e : ckpt.manifest.tensors) plan.tensors[e.name] = TensorPlan{};
    for (const auto& t : ckpt.tensors)
        plan.tensors[t.name] = TensorPlan{true, t.q.codebook.bits(), t.rank(), t.q.codebook.kind(), t.q.block_size};
    const CompressionReport cr = compression_ratio(ckpt.manifest, plan);
    out << "\ncompression: " << fmt_fixed(cr.ratio_percent, 3) << "% of 16-bit size, trainable "
        << fmt_fixed(cr.trainable_ratio_percent, 3) << "%, average bits " << fmt_fixed(cr.average_bits, 3)
        << '\n';

    const auto tp = timing_path(checkpoint);
    out << "\nwall time:\n";
    if (std::filesystem::exists(tp)) {
        const auto timing = nlohmann::ordered_json::parse(read_text(tp), nullptr, false);
        if (timing.is_discarded() || !timing.is_object()) throw FormatError("malformed timing file " + tp.string());
        for (const auto& [name, v] : timing.items())
            out << "  " << std::left << std::setw(40) << name << fmt_fixed(v.get<double>(), 3) << " s\n";
    } else {
        out << "  not recorded\n";
    }
    return kExitOk;
} catch (const std::exception& e) {
    return report_error(e, err);
}

int cmd_plan(const RunConfig& cfg, std::ostream& out, std::ostream& err) try {
    require_path(cfg.input, "--input");
    const PlanRequest req = load_request(cfg);
    const ModelManifest manifest = manifest_of(cfg.input, cfg.layer_pattern);
    const QuantPlan plan = build_plan(manifest, req);
    for (const auto& w : plan.warnings) err << "warning: " << w << '\n';

    const std::string text = format_plan_request(req);
    if (cfg.output.empty()) {
        out << text;
        return kExitOk;
    }
    write_text(cfg.output, text);
    for (const auto& e : manifest.tensors) {
        const TensorPlan& tp = plan.at(e.name);
        out << e.name << ' ';
        if (tp.process)
            out << tp.bits << "-bit " << to_string(tp.codebook) << " rank=" << tp.rank << '\n';
        else
            out << "pass-through\n";
    }
    const CompressionReport cr = compression_ratio(manifest, plan);
    out << "compression: " << fmt_fixed(cr.ratio_percent, 3) << "% of 16-bit size, average bits "
        << fmt_fixed(cr.average_bits, 3) << '\n';
    return kExitOk;
} catch (const std::exception& e) {
    return report_error(e, err);
}

}  // namespace loftq::cli
