// Copyright (C) 2026 The loftq-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include "loftq/matrix.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace loftq {

/// Element types of the tensor container. Names follow the container's
/// header spelling ("F32", "BF16", ...).
enum class DType : std::uint8_t { F64, F32, F16, BF16, I64, I32, I16, I8, U8, Bool };

std::string_view to_string(DType t);
DType parse_dtype(std::string_view text);
std::size_t dtype_size(DType t);

struct TensorInfo {
    std::string name;
    DType dtype = DType::F32;
    std::vector<std::size_t> shape;
    std::size_t begin = 0;  // offsets relative to the start of the data region
    std::size_t end = 0;

    std::size_t element_count() const noexcept;
    /// 2-D shapes as is, 1-D as 1 x n, 0-D as 1 x 1; higher ranks fold leading dims into rows.
    std::pair<std::size_t, std::size_t> matrix_shape() const;
};

/// One tensor held in memory: header fields plus its little-endian bytes.
struct TensorRecord {
    std::string name;
    DType dtype = DType::F32;
    std::vector<std::size_t> shape;
    std::vector<std::uint8_t> data;

    bool operator==(const TensorRecord&) const = default;
};

struct TensorContainer {
    std::vector<TensorRecord> tensors;
    std::map<std::string, std::string> metadata;

    const TensorRecord* find(std::string_view name) const;
    bool operator==(const TensorContainer&) const = default;
};

/// Streaming reader for the container layout
///   u64 LE header length | UTF-8 JSON header | raw data region
/// Only the header is parsed on open; tensors are read by offset on demand.
/// Reads open their own stream, so concurrent reads are safe.
class TensorFile {
public:
    explicit TensorFile(std::filesystem::path path);

    const std::vector<TensorInfo>& tensors() const noexcept { return infos_; }
    const TensorInfo& info(std::string_view name) const;
    const std::map<std::string, std::string>& metadata() const noexcept { return metadata_; }
    const std::filesystem::path& path() const noexcept { return path_; }

    std::vector<std::uint8_t> read_bytes(std::string_view name) const;
    Matrix read_matrix(std::string_view name) const;

private:
    std::filesystem::path path_;
    std::uint64_t data_start_ = 0;
    std::vector<TensorInfo> infos_;
    std::map<std::string, std::string> metadata_;
};

TensorContainer read_tensors(const std::filesystem::path& path);
/// Tensors are laid out in container order; the header is space-padded to a
/// multiple of 8 bytes.
void write_tensors(const std::filesystem::path& path, const TensorContainer& container);

/// Converts raw little-endian bytes to a rows x cols double matrix.
Matrix to_matrix(const TensorRecord& record);
TensorRecord from_matrix(std::string name, const Matrix& m, DType dtype = DType::F32);
TensorRecord from_matrix(std::string name, const MatrixF& m);

float half_to_float(std::uint16_t bits);
float bfloat16_to_float(std::uint16_t bits);

}  // namespace loftq
