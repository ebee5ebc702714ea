// Copyright (C) 2026 The loftq-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "loftq/safetensors.hpp"

#include "byte_io.hpp"
#include "loftq/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>

namespace loftq {

namespace {

constexpr std::uint64_t kMaxHeaderBytes = 100u << 20;

using OrderedJson = nlohmann::ordered_json;

struct DTypeName {
    DType type;
    std::string_view name;
    std::size_t size;
};

constexpr DTypeName kDTypes[] = {
    {DType::F64, "F64", 8}, {DType::F32, "F32", 4}, {DType::F16, "F16", 2}, {DType::BF16, "BF16", 2},
    {DType::I64, "I64", 8}, {DType::I32, "I32", 4}, {DType::I16, "I16", 2}, {DType::I8, "I8", 1},
    {DType::U8, "U8", 1},   {DType::Bool, "BOOL", 1},
};

std::uint64_t read_le(const std::uint8_t* p, std::size_t n) {
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

template <typename Int>
Int as_signed(std::uint64_t raw) {
    using U = std::make_unsigned_t<Int>;
    return static_cast<Int>(static_cast<U>(raw));
}

double element_at(const std::uint8_t* p, DType t) {
    switch (t) {
        case DType::F64: return std::bit_cast<double>(read_le(p, 8));
        case DType::F32: return std::bit_cast<float>(static_cast<std::uint32_t>(read_le(p, 4)));
        case DType::F16: return half_to_float(static_cast<std::uint16_t>(read_le(p, 2)));
        case DType::BF16: return bfloat16_to_float(static_cast<std::uint16_t>(read_le(p, 2)));
        case DType::I64: return static_cast<double>(as_signed<std::int64_t>(read_le(p, 8)));
        case DType::I32: return static_cast<double>(as_signed<std::int32_t>(read_le(p, 4)));
        case DType::I16: return static_cast<double>(as_signed<std::int16_t>(read_le(p, 2)));
        case DType::I8: return static_cast<double>(as_signed<std::int8_t>(read_le(p, 1)));
        case DType::U8: return static_cast<double>(p[0]);
        case DType::Bool: return p[0] != 0 ? 1.0 : 0.0;
    }
    return 0.0;
}

Matrix convert(std::span<const std::uint8_t> bytes, DType dtype, std::size_t rows, std::size_t cols) {
    const std::size_t esize = dtype_size(dtype);
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    double* dst = m.data();
    for (std::size_t k = 0; k < rows * cols; ++k) dst[k] = element_at(bytes.data() + k * esize, dtype);
    return m;
}

std::size_t shape_elements(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::pair<std::size_t, std::size_t> fold_shape(const std::vector<std::size_t>& shape) {
    if (shape.empty()) return {1, 1};
    if (shape.size() == 1) return {1, shape[0]};
    std::size_t rows = 1;
    for (std::size_t i = 0; i + 1 < shape.size(); ++i) rows *= shape[i];
    return {rows, shape.back()};
}

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    return in;
}

}  // namespace

std::string_view to_string(DType t) {
    for (const auto& d : kDTypes) {
        if (d.type == t) return d.name;
    }
    return "?";
}

DType parse_dtype(std::string_view text) {
    for (const auto& d : kDTypes) {
        if (d.name == text) return d.type;
    }
    throw FormatError("unsupported dtype '" + std::string(text) + "'");
}

std::size_t dtype_size(DType t) {
    for (const auto& d : kDTypes) {
        if (d.type == t) return d.size;
    }
    return 0;
}

float half_to_float(std::uint16_t h) {
    const std::uint32_t sign = static_cast<std::uint32_t>(h & 0x8000u) << 16;
    const std::uint32_t exp = (h >> 10) & 0x1Fu;
    const std::uint32_t mant = h & 0x3FFu;
    float magnitude;
    if (exp == 0) {
        magnitude = std::ldexp(static_cast<float>(mant), -24);
    } else if (exp == 0x1F) {
        magnitude = mant == 0 ? std::numeric_limits<float>::infinity() : std::numeric_limits<float>::quiet_NaN();
    } else {
        magnitude = std::bit_cast<float>(((exp + 112u) << 23) | (mant << 13));
    }
    return std::bit_cast<float>(std::bit_cast<std::uint32_t>(magnitude) | sign);
}

float bfloat16_to_float(std::uint16_t bits) {
    return std::bit_cast<float>(static_cast<std::uint32_t>(bits) << 16);
}

std::size_t TensorInfo::element_count() const noexcept { return shape_elements(shape); }

std::pair<std::size_t, std::size_t> TensorInfo::matrix_shape() const { return fold_shape(shape); }

const TensorRecord* TensorContainer::find(std::string_view name) const {
    for (const auto& t : tensors) {
        if (t.name == name) return &t;
    }
    return nullptr;
}

TensorFile::TensorFile(std::filesystem::path path) : path_(std::move(path)) {
    std::ifstream in = open_input(path_);
    in.seekg(0, std::ios::end);
    const auto file_size = static_cast<std::uint64_t>(in.tellg());
    in.seekg(0);
    if (file_size < 8) throw FormatError("'" + path_.string() + "' is too short for a tensor container");

    std::uint8_t len_bytes[8];
    in.read(reinterpret_cast<char*>(len_bytes), 8);
    const std::uint64_t header_len = read_le(len_bytes, 8);
    if (header_len > kMaxHeaderBytes || header_len > file_size - 8) {
        throw FormatError("header length " + std::to_string(header_len) + " exceeds file size");
    }
    std::string header(header_len, '\0');
    in.read(header.data(), static_cast<std::streamsize>(header_len));
    if (!in) throw IoError("short read of header in '" + path_.string() + "'");
    data_start_ = 8 + header_len;
    const std::uint64_t data_size = file_size - data_start_;

    OrderedJson doc;
    try {
        doc = OrderedJson::parse(header);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("malformed container header: " + std::string(e.what()));
    }
    if (!doc.is_object()) throw FormatError("container header is not a JSON object");

    for (const auto& [key, value] : doc.items()) {
        if (key == "__metadata__") {
            if (!value.is_object()) throw FormatError("__metadata__ must be an object");
            for (const auto& [mk, mv] : value.items()) {
                if (!mv.is_string()) throw FormatError("__metadata__ value for '" + mk + "' is not a string");
                metadata_[mk] = mv.get<std::string>();
            }
            continue;
        }
        const auto fail = [&](const std::string& why) { return FormatError("tensor '" + key + "': " + why); };
        if (!value.is_object() || !value.contains("dtype") || !value.contains("shape") ||
            !value.contains("data_offsets")) {
            throw fail("entry needs dtype, shape and data_offsets");
        }
        TensorInfo info;
        info.name = key;
        try {
            info.dtype = parse_dtype(value.at("dtype").get<std::string>());
            for (const auto& d : value.at("shape")) {
                if (!d.is_number_unsigned() && !(d.is_number_integer() && d.get<std::int64_t>() >= 0)) {
                    throw fail("shape entries must be non-negative integers");
                }
                info.shape.push_back(d.get<std::size_t>());
            }
            const auto& off = value.at("data_offsets");
            if (!off.is_array() || off.size() != 2) throw fail("data_offsets must be [begin, end]");
            info.begin = off[0].get<std::size_t>();
            info.end = off[1].get<std::size_t>();
        } catch (const FormatError& e) {
            if (std::string_view(e.what()).starts_with("tensor '")) throw;
            throw fail(e.what());
        } catch (const nlohmann::json::exception& e) {
            throw fail(e.what());
        }
        if (info.begin > info.end) throw fail("data_offsets begin > end");
        if (info.end - info.begin != info.element_count() * dtype_size(info.dtype)) {
            throw fail("byte range of " + std::to_string(info.end - info.begin) + " does not match shape");
        }
        infos_.push_back(std::move(info));
    }

    std::sort(infos_.begin(), infos_.end(), [](const TensorInfo& a, const TensorInfo& b) {
        return a.begin != b.begin ? a.begin < b.begin : a.end < b.end;
    });
    std::size_t cursor = 0;
    for (const auto& info : infos_) {
        if (info.begin != cursor) {
            throw FormatError("tensor '" + info.name + "': data offsets " +
                              (info.begin < cursor ? "overlap a previous tensor" : "leave a gap"));
        }
        cursor = info.end;
    }
    if (cursor != data_size) {
        throw FormatError("tensor data covers " + std::to_string(cursor) + " bytes but the data region has " +
                          std::to_string(data_size));
    }
}

const TensorInfo& TensorFile::info(std::string_view name) const {
    for (const auto& i : infos_) {
        if (i.name == name) return i;
    }
    throw InvalidArgument("no tensor named '" + std::string(name) + "' in '" + path_.string() + "'");
}

std::vector<std::uint8_t> TensorFile::read_bytes(std::string_view name) const {
    const TensorInfo& ti = info(name);
    std::ifstream in = open_input(path_);
    in.seekg(static_cast<std::streamoff>(data_start_ + ti.begin));
    std::vector<std::uint8_t> out(ti.end - ti.begin);
    in.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!in) throw IoError("short read of tensor '" + ti.name + "'");
    return out;
}

Matrix TensorFile::read_matrix(std::string_view name) const {
    const TensorInfo& ti = info(name);
    const auto [rows, cols] = ti.matrix_shape();
    return convert(read_bytes(name), ti.dtype, rows, cols);
}

TensorContainer read_tensors(const std::filesystem::path& path) {
    const TensorFile file(path);
    TensorContainer out;
    out.metadata = file.metadata();
    for (const auto& info : file.tensors()) {
        out.tensors.push_back({info.name, info.dtype, info.shape, file.read_bytes(info.name)});
    }
    return out;
}

void write_tensors(const std::filesystem::path& path, const TensorContainer& container) {
    OrderedJson header = OrderedJson::object();
    if (!container.metadata.empty()) header["__metadata__"] = container.metadata;
    std::size_t offset = 0;
    for (const auto& t : container.tensors) {
        if (t.data.size() != shape_elements(t.shape) * dtype_size(t.dtype)) {
            throw InvalidArgument("tensor '" + t.name + "': data size does not match shape and dtype");
        }
        if (header.contains(t.name)) throw InvalidArgument("duplicate tensor name '" + t.name + "'");
        header[t.name] = {{"dtype", std::string(to_string(t.dtype))},
                          {"shape", t.shape},
                          {"data_offsets", {offset, offset + t.data.size()}}};
        offset += t.data.size();
    }
    std::string text = header.dump();
    text.append((8 - text.size() % 8) % 8, ' ');

    detail::ByteWriter w;
    w.u64(text.size());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(w.buffer().data()), 8);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& t : container.tensors) {
        out.write(reinterpret_cast<const char*>(t.data.data()), static_cast<std::streamsize>(t.data.size()));
    }
    if (!out) throw IoError("failed writing '" + path.string() + "'");
}

Matrix to_matrix(const TensorRecord& record) {
    const auto [rows, cols] = fold_shape(record.shape);
    if (record.data.size() != rows * cols * dtype_size(record.dtype)) {
        throw FormatError("tensor '" + record.name + "': data size does not match shape");
    }
    return convert(record.data, record.dtype, rows, cols);
}

TensorRecord from_matrix(std::string name, const Matrix& m, DType dtype) {
    detail::ByteWriter w;
    const double* src = m.data();
    for (Eigen::Index k = 0; k < m.size(); ++k) {
        if (dtype == DType::F64) {
            w.f64(src[k]);
        } else if (dtype == DType::F32) {
            w.f32(static_cast<float>(src[k]));
        } else {
            throw InvalidArgument("from_matrix supports F64 and F32 output only");
        }
    }
    return {std::move(name), dtype,
            {static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())},
            std::move(w.buffer())};
}

TensorRecord from_matrix(std::string name, const MatrixF& m) {
    detail::ByteWriter w;
    for (Eigen::Index k = 0; k < m.size(); ++k) w.f32(m.data()[k]);
    return {std::move(name), DType::F32,
            {static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())},
            std::move(w.buffer())};
}

}  // namespace loftq
