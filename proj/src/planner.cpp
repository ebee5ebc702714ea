// Copyright (C) 2026 The loftq-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "loftq/planner.hpp"

#include "loftq/error.hpp"

#include <fnmatch.h>

#include <algorithm>
#include <charconv>
#include <regex>
#include <set>
#include <sstream>

namespace loftq {

namespace {

bool contains_any(std::string_view text, std::initializer_list<std::string_view> needles) {
    return std::any_of(needles.begin(), needles.end(),
                       [&](std::string_view n) { return text.find(n) != std::string_view::npos; });
}

bool glob_match(const std::string& pattern, const std::string& name) {
    return ::fnmatch(pattern.c_str(), name.c_str(), 0) == 0;
}

bool default_selected(const TensorEntry& e) {
    return e.rows > 1 && e.cols > 1 &&
           (e.role == TensorRole::Attention || e.role == TensorRole::FeedForward);
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(std::string_view text, std::string_view what) {
    T value{};
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc() || ptr != end) {
        throw InvalidArgument("invalid " + std::string(what) + " '" + std::string(text) + "'");
    }
    return value;
}

bool parse_bool(std::string_view text) {
    if (text == "true" || text == "1" || text == "yes") return true;
    if (text == "false" || text == "0" || text == "no") return false;
    throw InvalidArgument("invalid boolean '" + std::string(text) + "'");
}

std::string format_double(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

}  // namespace

std::string_view to_string(TensorRole role) {
    switch (role) {
        case TensorRole::Attention: return "attention";
        case TensorRole::FeedForward: return "feed_forward";
        case TensorRole::Embedding: return "embedding";
        case TensorRole::Other: return "other";
    }
    return "other";
}

std::size_t ModelManifest::total_parameters() const noexcept {
    std::size_t n = 0;
    for (const auto& t : tensors) n += t.parameter_count();
    return n;
}

const TensorEntry* ModelManifest::find(std::string_view name) const {
    for (const auto& t : tensors) {
        if (t.name == name) return &t;
    }
    return nullptr;
}

void ModelManifest::validate() const {
    std::set<std::string_view> seen;
    for (const auto& t : tensors) {
        if (!seen.insert(t.name).second) throw InvalidArgument("duplicate tensor name '" + t.name + "'");
        if (t.rows == 0 || t.cols == 0) throw InvalidArgument("tensor '" + t.name + "' has a zero dimension");
    }
}

std::optional<int> extract_layer_index(std::string_view name, std::string_view pattern) {
    const std::regex re{std::string(pattern)};
    std::match_results<std::string_view::const_iterator> m;
    if (!std::regex_search(name.begin(), name.end(), m, re) || m.size() < 2 || !m[1].matched) {
        return std::nullopt;
    }
    return parse_number<int>(std::string_view(&*m[1].first, static_cast<std::size_t>(m[1].length())),
                             "layer index");
}

TensorRole infer_role(std::string_view name) {
    if (contains_any(name, {"embed", "wte", "wpe", "word_embeddings", "position_embeddings"})) {
        return TensorRole::Embedding;
    }
    if (contains_any(name, {"norm", ".bias"})) return TensorRole::Other;
    if (contains_any(name, {"attn", "attention", "q_proj", "k_proj", "v_proj", "o_proj", "query",
                            "key", "value", "qkv"})) {
        return TensorRole::Attention;
    }
    if (contains_any(name, {"mlp", "ffn", "fc1", "fc2", "gate_proj", "up_proj", "down_proj",
                            "intermediate", "feed_forward", "output.dense", "c_fc"})) {
        return TensorRole::FeedForward;
    }
    return TensorRole::Other;
}

TensorEntry make_entry(std::string name, std::size_t rows, std::size_t cols,
                       std::string_view layer_pattern) {
    TensorEntry e;
    e.layer_index = extract_layer_index(name, layer_pattern);
    e.role = infer_role(name);
    e.name = std::move(name);
    e.rows = rows;
    e.cols = cols;
    return e;
}

MixedPrecision parse_mixed(std::string_view text) {
    const auto a = text.find(':');
    const auto b = a == std::string_view::npos ? a : text.find(':', a + 1);
    if (a == std::string_view::npos || b == std::string_view::npos) {
        throw InvalidArgument("mixed precision must be k:high:low, got '" + std::string(text) + "'");
    }
    MixedPrecision m;
    m.cutoff = parse_number<int>(text.substr(0, a), "layer cutoff");
    m.high_bits = parse_number<int>(text.substr(a + 1, b - a - 1), "high bit width");
    m.low_bits = parse_number<int>(text.substr(b + 1), "low bit width");
    if (m.cutoff < 0) throw InvalidArgument("layer cutoff must be non-negative");
    return m;
}

const TensorPlan& QuantPlan::at(std::string_view name) const {
    const auto it = tensors.find(std::string(name));
    if (it == tensors.end()) throw InvalidArgument("tensor '" + std::string(name) + "' is not in the plan");
    return it->second;
}

std::size_t QuantPlan::processed_count() const {
    return static_cast<std::size_t>(
        std::count_if(tensors.begin(), tensors.end(), [](const auto& kv) { return kv.second.process; }));
}

std::vector<const TensorEntry*> select_tensors(const ModelManifest& manifest,
                                               const std::vector<std::string>& patterns,
                                               std::vector<std::string>* warnings) {
    std::vector<const TensorEntry*> out;
    std::vector<bool> hit(patterns.size(), false);
    for (const TensorEntry& e : manifest.tensors) {
        bool selected = patterns.empty() && default_selected(e);
        for (std::size_t p = 0; p < patterns.size(); ++p) {
            if (glob_match(patterns[p], e.name)) {
                selected = true;
                hit[p] = true;
            }
        }
        if (selected) out.push_back(&e);
    }
    if (warnings != nullptr) {
        for (std::size_t p = 0; p < patterns.size(); ++p) {
            if (!hit[p]) warnings->push_back("pattern '" + patterns[p] + "' matched no tensors");
        }
    }
    return out;
}

QuantPlan build_plan(const ModelManifest& manifest, const PlanRequest& request) {
    manifest.validate();
    QuantPlan plan;
    plan.defaults = request.defaults;

    const auto chosen = select_tensors(manifest, request.selection, &plan.warnings);
    for (const TensorEntry& e : manifest.tensors) {
        const bool selected = std::find(chosen.begin(), chosen.end(), &e) != chosen.end();

        TensorPlan tp;
        tp.process = selected;
        tp.rank = request.defaults.rank;
        tp.codebook = request.defaults.codebook;
        tp.block_size = request.defaults.block_size;
        tp.bits = request.defaults.bits;
        if (request.mixed) {
            if (selected && !e.layer_index) {
                plan.warnings.push_back("tensor '" + e.name +
                                        "' has no layer index; using low bit width for mixed precision");
            }
            const bool early = e.layer_index && *e.layer_index < request.mixed->cutoff;
            tp.bits = early ? request.mixed->high_bits : request.mixed->low_bits;
        }
        if (const auto it = request.overrides.find(e.name); it != request.overrides.end()) {
            const TensorOverride& o = it->second;
            if (o.process) tp.process = *o.process;
            if (o.bits) tp.bits = *o.bits;
            if (o.rank) tp.rank = *o.rank;
            if (o.codebook) tp.codebook = *o.codebook;
            if (o.block_size) tp.block_size = *o.block_size;
        }
        if (!tp.process) {
            tp = TensorPlan{};
        } else {
            if (tp.bits < kMinBits || tp.bits > kMaxBits) {
                throw InvalidPlan("tensor '" + e.name + "': bit width " + std::to_string(tp.bits) +
                                  " outside [1, 8]");
            }
            const std::size_t d = std::min(e.rows, e.cols);
            if (tp.rank < 1 || tp.rank > d) {
                throw InvalidPlan("tensor '" + e.name + "': rank " + std::to_string(tp.rank) +
                                  " outside [1, " + std::to_string(d) + "]");
            }
            if (tp.block_size == 0) throw InvalidPlan("tensor '" + e.name + "': block size is zero");
        }
        plan.tensors.emplace(e.name, tp);
    }

    for (const auto& [name, _] : request.overrides) {
        if (!manifest.find(name)) plan.warnings.push_back("override for unknown tensor '" + name + "'");
    }
    return plan;
}

double quantized_tensor_bits(std::size_t rows, std::size_t cols, int bits, CodebookKind kind,
                             std::size_t block_size) {
    const double count = static_cast<double>(rows) * static_cast<double>(cols);
    const double blocks = std::ceil(count / static_cast<double>(block_size));
    const double scale_bits = kind == CodebookKind::Uniform ? 64.0 : 32.0;
    const double codebook_bits = 8.0 + 8.0 + 64.0 + 64.0 * static_cast<double>(1u << bits);
    return count * bits + blocks * scale_bits + codebook_bits;
}

CompressionReport compression_ratio(const ModelManifest& manifest, const QuantPlan& plan) {
    CompressionReport r;
    double adapter_params = 0.0;
    double processed_params = 0.0;
    double processed_code_bits = 0.0;
    for (const TensorEntry& e : manifest.tensors) {
        const double count = static_cast<double>(e.parameter_count());
        r.original_bits_total += 16.0 * count;
        const auto it = plan.tensors.find(e.name);
        if (it == plan.tensors.end() || !it->second.process) {
            r.compressed_bits_total += 16.0 * count;
            continue;
        }
        const TensorPlan& tp = it->second;
        r.compressed_bits_total += quantized_tensor_bits(e.rows, e.cols, tp.bits, tp.codebook, tp.block_size);
        adapter_params += static_cast<double>(tp.rank) * static_cast<double>(e.rows + e.cols);
        processed_params += count;
        processed_code_bits += count * tp.bits;
    }
    const double total = static_cast<double>(manifest.total_parameters());
    if (r.original_bits_total > 0.0) r.ratio_percent = 100.0 * r.compressed_bits_total / r.original_bits_total;
    if (total > 0.0) r.trainable_ratio_percent = 100.0 * adapter_params / total;
    if (processed_params > 0.0) r.average_bits = processed_code_bits / processed_params;
    return r;
}

std::string format_plan_request(const PlanRequest& request) {
    std::ostringstream os;
    const PlanDefaults& d = request.defaults;
    os << "# loftq plan v1\n";
    os << "bits = " << d.bits << "\n";
    os << "rank = " << d.rank << "\n";
    os << "codebook = " << to_string(d.codebook) << "\n";
    os << "block_size = " << d.block_size << "\n";
    os << "steps = " << d.steps << "\n";
    os << "variant = " << to_string(d.variant) << "\n";
    os << "quantile_clip = " << format_double(d.quantile_clip) << "\n";
    if (request.mixed) {
        os << "mixed = " << request.mixed->cutoff << ":" << request.mixed->high_bits << ":"
           << request.mixed->low_bits << "\n";
    }
    for (const auto& s : request.selection) os << "select = " << s << "\n";
    for (const auto& [name, o] : request.overrides) {
        os << "\n[tensor " << name << "]\n";
        if (o.process) os << "process = " << (*o.process ? "true" : "false") << "\n";
        if (o.bits) os << "bits = " << *o.bits << "\n";
        if (o.rank) os << "rank = " << *o.rank << "\n";
        if (o.codebook) os << "codebook = " << to_string(*o.codebook) << "\n";
        if (o.block_size) os << "block_size = " << *o.block_size << "\n";
    }
    return os.str();
}

PlanRequest parse_plan_request(std::string_view text) {
    PlanRequest req;
    TensorOverride* section = nullptr;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        const auto raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        const std::string line = trim(raw);
        if (line.empty() || line[0] == '#') continue;

        const auto where = [&] { return "plan line " + std::to_string(line_no) + ": "; };
        if (line.front() == '[') {
            constexpr std::string_view prefix = "[tensor ";
            if (line.back() != ']' || line.rfind(prefix, 0) != 0) {
                throw InvalidArgument(where() + "expected '[tensor <name>]'");
            }
            const std::string name = trim(std::string_view(line).substr(prefix.size(), line.size() - prefix.size() - 1));
            if (name.empty()) throw InvalidArgument(where() + "empty tensor name");
            section = &req.overrides[name];
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw InvalidArgument(where() + "expected 'key = value'");
        const std::string key = trim(std::string_view(line).substr(0, eq));
        const std::string value = trim(std::string_view(line).substr(eq + 1));

        try {
            if (section != nullptr) {
                if (key == "process") section->process = parse_bool(value);
                else if (key == "bits") section->bits = parse_number<int>(value, "bits");
                else if (key == "rank") section->rank = parse_number<std::size_t>(value, "rank");
                else if (key == "codebook") section->codebook = parse_codebook_kind(value);
                else if (key == "block_size") section->block_size = parse_number<std::size_t>(value, "block size");
                else throw InvalidArgument("unknown tensor key '" + key + "'");
                continue;
            }
            PlanDefaults& d = req.defaults;
            if (key == "bits") d.bits = parse_number<int>(value, "bits");
            else if (key == "rank") d.rank = parse_number<std::size_t>(value, "rank");
            else if (key == "codebook") d.codebook = parse_codebook_kind(value);
            else if (key == "block_size") d.block_size = parse_number<std::size_t>(value, "block size");
            else if (key == "steps") d.steps = parse_number<int>(value, "steps");
            else if (key == "variant") d.variant = parse_variant(value);
            else if (key == "quantile_clip") d.quantile_clip = parse_number<double>(value, "quantile clip");
            else if (key == "mixed") req.mixed = parse_mixed(value);
            else if (key == "select") req.selection.push_back(value);
            else throw InvalidArgument("unknown key '" + key + "'");
        } catch (const InvalidArgument& e) {
            throw InvalidArgument(where() + e.what());
        }
    }
    return req;
}

}  // namespace loftq
