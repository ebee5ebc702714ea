// Copyright (C) 2026 The loftq-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "loftq/checkpoint.hpp"

#include "byte_io.hpp"
#include "loftq/error.hpp"

#include <zlib.h>

#include <fstream>
#include <iterator>
#include <set>

namespace loftq {

namespace {

constexpr std::uint8_t kLittleEndian = 1;

std::uint32_t crc_of(std::span<const std::uint8_t> bytes) {
    uLong crc = crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed in chunks for very large files.
    std::size_t pos = 0;
    while (pos < bytes.size()) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - pos, 1u << 30));
        crc = crc32(crc, bytes.data() + pos, chunk);
        pos += chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

void write_codebook(detail::ByteWriter& w, const Codebook& cb) {
    w.u8(static_cast<std::uint8_t>(cb.kind()));
    w.u8(static_cast<std::uint8_t>(cb.bits()));
    w.f64(cb.quantile_clip());
    for (double level : cb.levels()) w.f64(level);
}

Codebook read_codebook(detail::ByteReader& r) {
    const auto kind = static_cast<CodebookKind>(r.u8());
    const int bits = r.u8();
    const double clip = r.f64();
    if (bits < kMinBits || bits > kMaxBits) throw FormatError("codebook bits out of range");
    std::vector<double> levels(std::size_t{1} << bits);
    for (double& level : levels) level = r.f64();
    return Codebook(kind, bits, clip, std::move(levels));
}

void write_matrix_f32(detail::ByteWriter& w, const MatrixF& m) {
    for (Eigen::Index k = 0; k < m.size(); ++k) w.f32(m.data()[k]);
}

MatrixF read_matrix_f32(detail::ByteReader& r, std::size_t rows, std::size_t cols) {
    MatrixF m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = r.f32();
    return m;
}

void write_tensor_section(detail::ByteWriter& w, const QuantizedTensor& t) {
    const QuantizedMatrix& q = t.q;
    w.str16(t.name);
    w.u64(q.rows);
    w.u64(q.cols);
    w.u32(static_cast<std::uint32_t>(q.block_size));
    write_codebook(w, q.codebook);
    const bool minmax = q.codebook.normalization() == Normalization::MinMax;
    w.u64(q.scales.size());
    for (const BlockScale& s : q.scales) {
        if (minmax) w.f32(static_cast<float>(s.lo));
        w.f32(static_cast<float>(s.hi));
    }
    w.u64(q.packed_codes.size());
    w.bytes(q.packed_codes);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    write_matrix_f32(w, t.adapter_a);
    write_matrix_f32(w, t.adapter_b);
    w.u32(static_cast<std::uint32_t>(t.steps));
    w.u8(static_cast<std::uint8_t>(t.variant));
    w.u32(static_cast<std::uint32_t>(t.trace.size()));
    for (const TraceEntry& e : t.trace) {
        w.u32(static_cast<std::uint32_t>(e.step));
        w.f64(e.objective);
        w.f64(e.residual_norm);
    }
    w.f64(t.stored_objective);
}

QuantizedTensor read_tensor_section(detail::ByteReader& r) {
    QuantizedTensor t;
    t.name = r.str16();
    QuantizedMatrix& q = t.q;
    q.rows = r.u64();
    q.cols = r.u64();
    q.block_size = r.u32();
    if (q.rows == 0 || q.cols == 0 || q.rows > (1u << 30) || q.cols > (1u << 30)) {
        throw FormatError("implausible shape");
    }
    q.codebook = read_codebook(r);
    const bool minmax = q.codebook.normalization() == Normalization::MinMax;
    const std::uint64_t scale_count = r.u64();
    if (scale_count > r.remaining()) throw FormatError("scale count exceeds section size");
    q.scales.resize(scale_count);
    for (BlockScale& s : q.scales) {
        if (minmax) s.lo = r.f32();
        s.hi = r.f32();
    }
    const std::uint64_t code_bytes = r.u64();
    const auto codes = r.bytes(code_bytes);
    q.packed_codes.assign(codes.begin(), codes.end());
    const std::uint32_t rank = r.u32();
    if (rank > std::min(q.rows, q.cols)) throw FormatError("adapter rank exceeds min(rows, cols)");
    if (q.rows * rank * 4 + q.cols * rank * 4 > r.remaining()) throw FormatError("adapters exceed section size");
    t.adapter_a = read_matrix_f32(r, q.rows, rank);
    t.adapter_b = read_matrix_f32(r, q.cols, rank);
    t.steps = static_cast<int>(r.u32());
    const std::uint8_t variant = r.u8();
    if (variant > static_cast<std::uint8_t>(Variant::SwappedOrder)) throw FormatError("unknown variant tag");
    t.variant = static_cast<Variant>(variant);
    const std::uint32_t trace_len = r.u32();
    if (trace_len > r.remaining() / 20) throw FormatError("trace length exceeds section size");
    t.trace.resize(trace_len);
    for (TraceEntry& e : t.trace) {
        e.step = static_cast<int>(r.u32());
        e.objective = r.f64();
        e.residual_norm = r.f64();
    }
    t.stored_objective = r.f64();
    return t;
}

}  // namespace

LowRankFactors QuantizedTensor::factors() const {
    return {adapter_a.cast<double>(), adapter_b.cast<double>()};
}

const QuantizedTensor* QuantizedCheckpoint::find(std::string_view name) const {
    for (const auto& t : tensors) {
        if (t.name == name) return &t;
    }
    return nullptr;
}

void QuantizedCheckpoint::validate() const {
    if (version != kCheckpointVersion) {
        throw FormatError("unsupported checkpoint version " + std::to_string(version));
    }
    try {
        manifest.validate();
    } catch (const InvalidArgument& e) {
        throw FormatError(std::string("manifest: ") + e.what());
    }
    std::set<std::string_view> seen;
    for (const QuantizedTensor& t : tensors) {
        const auto fail = [&](const std::string& why) { return FormatError("tensor '" + t.name + "': " + why); };
        if (!seen.insert(t.name).second) throw fail("appears twice");
        try {
            t.q.validate();
        } catch (const FormatError& e) {
            throw fail(e.what());
        }
        const auto rank = static_cast<Eigen::Index>(t.rank());
        if (rank < 1) throw fail("adapter rank is zero");
        if (t.adapter_a.rows() != static_cast<Eigen::Index>(t.q.rows) ||
            t.adapter_b.rows() != static_cast<Eigen::Index>(t.q.cols) || t.adapter_b.cols() != rank) {
            throw fail("adapter shapes do not match the backbone and declared rank");
        }
        if (static_cast<std::size_t>(rank) > std::min(t.q.rows, t.q.cols)) throw fail("rank exceeds min(rows, cols)");
        if (t.steps < 0) throw fail("negative step count");
        const TensorEntry* entry = manifest.find(t.name);
        if (entry == nullptr) throw fail("missing from the manifest");
        if (entry->rows != t.q.rows || entry->cols != t.q.cols) throw fail("shape differs from the manifest");
    }
}

QuantizedTensor make_quantized_tensor(std::string name, const Matrix& w, const LoftqResult& result,
                                      int steps, Variant variant) {
    QuantizedTensor t;
    t.name = std::move(name);
    t.q = result.q;
    t.adapter_a = result.factors.A.cast<float>();
    t.adapter_b = result.factors.B.cast<float>();
    t.steps = steps;
    t.variant = variant;
    t.trace = result.trace;
    t.stored_objective = objective(w, dequantize_matrix(t.q), t.factors());
    return t;
}

std::vector<std::uint8_t> serialize_checkpoint(const QuantizedCheckpoint& ckpt) {
    ckpt.validate();
    detail::ByteWriter w;
    for (char c : kCheckpointMagic) w.u8(static_cast<std::uint8_t>(c));
    w.u16(ckpt.version);
    w.u8(kLittleEndian);
    w.u8(0);
    w.str32(ckpt.plan_echo);

    w.u32(static_cast<std::uint32_t>(ckpt.manifest.tensors.size()));
    for (const TensorEntry& e : ckpt.manifest.tensors) {
        w.str16(e.name);
        w.u64(e.rows);
        w.u64(e.cols);
        w.u32(static_cast<std::uint32_t>(e.layer_index.value_or(-1)));
        w.u8(static_cast<std::uint8_t>(e.role));
    }

    w.u32(static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const QuantizedTensor& t : ckpt.tensors) {
        detail::ByteWriter section;
        write_tensor_section(section, t);
        w.u64(section.buffer().size());
        w.bytes(section.buffer());
    }
    w.u32(crc_of(w.buffer()));
    return std::move(w.buffer());
}

QuantizedCheckpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 12) throw FormatError("checkpoint is too short");
    const auto body = bytes.first(bytes.size() - 4);
    detail::ByteReader tail(bytes.last(4));
    if (tail.u32() != crc_of(body)) throw FormatError("checkpoint checksum mismatch");

    detail::ByteReader r(body);
    for (char c : kCheckpointMagic) {
        if (r.u8() != static_cast<std::uint8_t>(c)) throw FormatError("not a checkpoint (bad magic)");
    }
    QuantizedCheckpoint ckpt;
    ckpt.version = r.u16();
    if (ckpt.version != kCheckpointVersion) {
        throw FormatError("unsupported checkpoint version " + std::to_string(ckpt.version));
    }
    if (r.u8() != kLittleEndian) throw FormatError("checkpoint is not little-endian");
    r.u8();
    ckpt.plan_echo = r.str32();

    const std::uint32_t manifest_count = r.u32();
    for (std::uint32_t i = 0; i < manifest_count; ++i) {
        TensorEntry e;
        e.name = r.str16();
        e.rows = r.u64();
        e.cols = r.u64();
        const auto layer = static_cast<std::int32_t>(r.u32());
        if (layer >= 0) e.layer_index = layer;
        const std::uint8_t role = r.u8();
        if (role > static_cast<std::uint8_t>(TensorRole::Other)) throw FormatError("unknown tensor role tag");
        e.role = static_cast<TensorRole>(role);
        ckpt.manifest.tensors.push_back(std::move(e));
    }

    const std::uint32_t tensor_count = r.u32();
    for (std::uint32_t i = 0; i < tensor_count; ++i) {
        const std::uint64_t len = r.u64();
        if (len > r.remaining()) throw FormatError("tensor section exceeds file size");
        detail::ByteReader section(r.bytes(len));
        QuantizedTensor t = read_tensor_section(section);
        if (section.remaining() != 0) throw FormatError("tensor '" + t.name + "': trailing bytes in section");
        ckpt.tensors.push_back(std::move(t));
    }
    if (r.remaining() != 0) throw FormatError("trailing bytes after the last tensor section");
    ckpt.validate();
    return ckpt;
}

void write_checkpoint(const std::filesystem::path& path, const QuantizedCheckpoint& ckpt) {
    const auto bytes = serialize_checkpoint(ckpt);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing '" + path.string() + "'");
}

QuantizedCheckpoint read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_checkpoint(bytes);
}

Matrix reconstruct_backbone(const QuantizedCheckpoint& ckpt, std::string_view name) {
    const QuantizedTensor* t = ckpt.find(name);
    if (t == nullptr) throw InvalidArgument("checkpoint has no tensor named '" + std::string(name) + "'");
    return dequantize_matrix(t->q);
}

TensorContainer export_adapters(const QuantizedCheckpoint& ckpt) {
    TensorContainer out;
    out.metadata["format"] = "loftq-adapters";
    out.metadata["layout"] = "Y = X W + (X A) B^T; A is [in, rank], B is [out, rank]";
    for (const QuantizedTensor& t : ckpt.tensors) {
        out.tensors.push_back(from_matrix(t.name + ".lora_A", t.adapter_a));
        out.tensors.push_back(from_matrix(t.name + ".lora_B", t.adapter_b));
    }
    return out;
}

}  // namespace loftq
