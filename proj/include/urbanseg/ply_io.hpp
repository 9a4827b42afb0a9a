// Copyright 2026 The urbanseg Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "urbanseg/core_model.hpp"
#include "urbanseg/spatial_index.hpp"

namespace urbanseg {

// ---------------------------------------------------------------------------
// PLY

enum class PlyFormat { kAscii, kBinaryLittleEndian };

enum class PlyScalar { kInt8, kUInt8, kInt16, kUInt16, kInt32, kUInt32, kFloat32, kFloat64 };

struct PlyProperty {
  std::string name;
  PlyScalar type = PlyScalar::kFloat64;
  bool is_list = false;
  PlyScalar count_type = PlyScalar::kUInt8;
};

struct PlyElement {
  std::string name;
  std::uint64_t count = 0;
  std::vector<PlyProperty> properties;
};

struct PlyHeader {
  PlyFormat format = PlyFormat::kBinaryLittleEndian;
  std::vector<PlyElement> elements;
  std::vector<std::string> comments;

  const PlyElement& vertex() const;
  std::uint64_t vertex_count() const { return vertex().count; }
};

struct PlyReadOptions {
  // First property found in this order is read as the label.
  std::vector<std::string> label_properties{"class", "label", "scalar_Label"};
};

// Parses only the header; `header_size` receives the byte offset of the body.
PlyHeader parse_ply_header(std::string_view bytes, std::size_t* header_size = nullptr);

PointCloud read_ply(std::string_view bytes, const PlyReadOptions& options = {});
PointCloud read_ply_file(const std::string& path, const PlyReadOptions& options = {});

// Layout per vertex: double x,y,z; uchar red,green,blue (if colors); uchar
// class (if labels). The schema name travels in a "schema" comment.
std::string write_ply(const PointCloud& cloud, PlyFormat format);
void write_ply_file(const PointCloud& cloud, const std::string& path, PlyFormat format);

// ---------------------------------------------------------------------------
// PCB1 array bundle: magic "PCB1", u32 version, u32 array count, then per
// array: u32 name length, name bytes, u8 dtype, u32 rank, u64 dims[rank],
// little-endian payload.

enum class DType : std::uint8_t {
  kUInt8 = 1,
  kInt32 = 2,
  kUInt32 = 3,
  kInt64 = 4,
  kFloat32 = 5,
  kFloat64 = 6,
};

std::size_t dtype_size(DType dtype);

template <typename T>
constexpr DType dtype_of() {
  if constexpr (std::is_same_v<T, std::uint8_t>) return DType::kUInt8;
  else if constexpr (std::is_same_v<T, std::int32_t>) return DType::kInt32;
  else if constexpr (std::is_same_v<T, std::uint32_t>) return DType::kUInt32;
  else if constexpr (std::is_same_v<T, std::int64_t>) return DType::kInt64;
  else if constexpr (std::is_same_v<T, float>) return DType::kFloat32;
  else if constexpr (std::is_same_v<T, double>) return DType::kFloat64;
  else static_assert(sizeof(T) == 0, "unsupported bundle dtype");
}

struct NamedArray {
  std::string name;
  DType dtype = DType::kFloat64;
  std::vector<std::uint64_t> dims;
  // Host-order element bytes.
  std::vector<std::uint8_t> data;

  std::uint64_t element_count() const;
};

class ArrayBundle {
 public:
  static constexpr std::uint32_t kVersion = 1;

  template <typename T>
  void add(std::string name, std::vector<std::uint64_t> dims, std::span<const T> values) {
    NamedArray a;
    a.name = std::move(name);
    a.dtype = dtype_of<T>();
    a.dims = std::move(dims);
    if (a.element_count() != values.size()) {
      throw ValidationError("bundle array '" + a.name + "': dims do not match value count");
    }
    a.data.resize(values.size_bytes());
    if (!values.empty()) std::memcpy(a.data.data(), values.data(), values.size_bytes());
    insert(std::move(a));
  }

  // Row-major 2-D Eigen array.
  template <typename Derived>
  void add_matrix(std::string name, const Eigen::DenseBase<Derived>& m) {
    using T = typename Derived::Scalar;
    Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
    add<T>(std::move(name),
           {static_cast<std::uint64_t>(rm.rows()), static_cast<std::uint64_t>(rm.cols())},
           std::span<const T>(rm.data(), static_cast<std::size_t>(rm.size())));
  }

  template <typename T>
  std::vector<T> get(std::string_view name) const {
    const NamedArray& a = at(name);
    if (a.dtype != dtype_of<T>()) {
      throw FormatError("bundle array '" + a.name + "' has unexpected dtype");
    }
    std::vector<T> out(a.element_count());
    if (!out.empty()) std::memcpy(out.data(), a.data.data(), a.data.size());
    return out;
  }

  template <typename T>
  Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> get_matrix(
      std::string_view name) const {
    const NamedArray& a = at(name);
    if (a.dims.size() != 2) throw FormatError("bundle array '" + a.name + "' is not 2-D");
    const std::vector<T> flat = get<T>(name);
    Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> m(
        static_cast<Eigen::Index>(a.dims[0]), static_cast<Eigen::Index>(a.dims[1]));
    if (!flat.empty()) std::memcpy(m.data(), flat.data(), flat.size() * sizeof(T));
    return m;
  }

  bool contains(std::string_view name) const;
  const NamedArray& at(std::string_view name) const;
  const std::vector<NamedArray>& arrays() const { return arrays_; }

  std::string serialize() const;
  static ArrayBundle parse(std::string_view bytes);

  friend bool operator==(const ArrayBundle& a, const ArrayBundle& b);

 private:
  void insert(NamedArray array);
  std::vector<NamedArray> arrays_;
};

using FeatureMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct NeighborhoodExport {
  NeighborGraph graph;
  FeatureMatrix features;
};

// Arrays: "neighbor_indices" (int32 N x k), "neighbor_distances" (float64
// N x k), "features" (float32 N x C).
void write_array_bundle(const NeighborGraph& graph, const FeatureMatrix& features,
                        const std::string& path);
NeighborhoodExport read_array_bundle(const std::string& path);

void write_bundle_file(const ArrayBundle& bundle, const std::string& path);
ArrayBundle read_bundle_file(const std::string& path);

// Arrays: "positions" (float64 N x 3), optional "colors" (uint8 N x 3),
// optional "labels" (uint32 N), "schema_name" (uint8 bytes).
ArrayBundle cloud_to_bundle(const PointCloud& cloud);
PointCloud cloud_from_bundle(const ArrayBundle& bundle);

}  // namespace urbanseg
