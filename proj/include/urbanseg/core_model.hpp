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
#include <map>
#include <optional>
#include <ranges>
#include <string>
#include <string_view>
#include <vector>

#include "urbanseg/errors.hpp"

namespace urbanseg {

using Label = std::uint32_t;

// N x 3 arrays, one point per row.
using Positions = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using Colors = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, 3, Eigen::RowMajor>;
using Labels = std::vector<Label>;

struct PointCloud {
  Positions positions;
  std::optional<Colors> colors;
  std::optional<Labels> labels;
  std::string schema_name;

  Eigen::Index size() const { return positions.rows(); }
  bool empty() const { return positions.rows() == 0; }
  bool has_colors() const { return colors.has_value(); }
  bool has_labels() const { return labels.has_value(); }
};

// Gathers rows of `cloud` in the order given by `indices` (duplicates allowed).
PointCloud select(const PointCloud& cloud, const std::vector<Eigen::Index>& indices);

// Keeps the rows whose mask entry is true, preserving order.
PointCloud select_mask(const PointCloud& cloud, const std::vector<bool>& keep);

class ClassSchema {
 public:
  ClassSchema() = default;
  // Throws ValidationError on empty or duplicate names.
  ClassSchema(std::string name, std::vector<std::string> class_names);

  const std::string& name() const { return name_; }
  const std::vector<std::string>& class_names() const { return class_names_; }
  std::size_t class_count() const { return class_names_.size(); }
  const std::string& class_name(Label id) const;
  std::optional<Label> find(std::string_view class_name) const;
  Label id_of(std::string_view class_name) const;

  friend bool operator==(const ClassSchema&, const ClassSchema&) = default;

 private:
  std::string name_;
  std::vector<std::string> class_names_;
};

// Background, Building, Vegetation, Road, Water (ids 0..4).
const ClassSchema& urban5_schema();
const ClassSchema& sensat_urban_schema();
const ClassSchema& toronto3d_schema();
// Eight-class schema used by the synthetic pre-training scenes.
const ClassSchema& synthetic_source_schema();

// Built-in schema lookup by name; throws ValidationError on unknown names.
const ClassSchema& builtin_schema(std::string_view name);

namespace target {
inline constexpr Label kBackground = 0;
inline constexpr Label kBuilding = 1;
inline constexpr Label kVegetation = 2;
inline constexpr Label kRoad = 3;
inline constexpr Label kWater = 4;
inline constexpr std::size_t kClassCount = 5;
}  // namespace target

class ClassMap {
 public:
  ClassMap() = default;
  // `mapping[s]` is the target id for source id `s`. Must be total over the
  // source schema and land inside the target schema.
  ClassMap(const ClassSchema& source, const ClassSchema& target, std::vector<Label> mapping);
  // Name-based construction; every source class must be named exactly once.
  static ClassMap from_names(const ClassSchema& source, const ClassSchema& target,
                             const std::map<std::string, std::string>& mapping);
  static ClassMap identity(const ClassSchema& schema);

  const std::string& source_schema() const { return source_schema_; }
  const std::string& target_schema() const { return target_schema_; }
  std::size_t target_class_count() const { return target_count_; }
  const std::vector<Label>& mapping() const { return mapping_; }
  Label operator()(Label source_id) const;

 private:
  std::string source_schema_;
  std::string target_schema_;
  std::size_t target_count_ = 0;
  std::vector<Label> mapping_;
};

ClassMap default_sensat_urban_map();
ClassMap default_toronto3d_map();
ClassMap default_synthetic_source_map();

// Loads {"name": ..., "classes": [...]}.
ClassSchema load_class_schema_json(const std::string& json_text);
// Loads {"source": name, "target": name, "mapping": {source_name: target_name}}.
// Schema names are resolved against `schemas` first, then the built-ins.
ClassMap load_class_map_json(const std::string& json_text,
                             const std::vector<ClassSchema>& schemas = {});

struct ValidationReport {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

ValidationReport validate_cloud(const PointCloud& cloud, const ClassSchema& schema);

PointCloud remap_labels(const PointCloud& cloud, const ClassMap& map);

using ClassHistogram = std::map<Label, std::uint64_t>;

// Counts per class id over any range of labels; ids 0..class_count-1 are
// always present (possibly zero). Labels >= class_count are counted too.
template <std::ranges::input_range R>
ClassHistogram class_histogram(R&& labels, std::size_t class_count) {
  std::vector<std::uint64_t> counts(class_count, 0);
  ClassHistogram hist;
  for (auto&& label : labels) {
    const auto id = static_cast<Label>(label);
    if (id < class_count) {
      ++counts[id];
    } else {
      ++hist[id];
    }
  }
  for (std::size_t c = 0; c < class_count; ++c) hist[static_cast<Label>(c)] = counts[c];
  return hist;
}

// Throws ValidationError when the cloud has no labels.
ClassHistogram class_histogram(const PointCloud& cloud, std::size_t class_count);
ClassHistogram class_histogram(const PointCloud& cloud, const ClassSchema& schema);

}  // namespace urbanseg
