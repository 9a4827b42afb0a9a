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

#include "urbanseg/core_model.hpp"

#include <cmath>
#include <nlohmann/json.hpp>
#include <set>

namespace urbanseg {

PointCloud select(const PointCloud& cloud, const std::vector<Eigen::Index>& indices) {
  PointCloud out;
  out.schema_name = cloud.schema_name;
  const auto n = static_cast<Eigen::Index>(indices.size());
  out.positions.resize(n, 3);
  if (cloud.colors) out.colors.emplace(n, 3);
  if (cloud.labels) out.labels.emplace(indices.size());
  for (Eigen::Index r = 0; r < n; ++r) {
    const Eigen::Index src = indices[static_cast<std::size_t>(r)];
    if (src < 0 || src >= cloud.size()) throw ValidationError("select: index out of range");
    out.positions.row(r) = cloud.positions.row(src);
    if (cloud.colors) out.colors->row(r) = cloud.colors->row(src);
    if (cloud.labels) (*out.labels)[static_cast<std::size_t>(r)] = (*cloud.labels)[static_cast<std::size_t>(src)];
  }
  return out;
}

PointCloud select_mask(const PointCloud& cloud, const std::vector<bool>& keep) {
  if (static_cast<Eigen::Index>(keep.size()) != cloud.size()) {
    throw ValidationError("select_mask: mask length differs from point count");
  }
  std::vector<Eigen::Index> indices;
  for (std::size_t i = 0; i < keep.size(); ++i) {
    if (keep[i]) indices.push_back(static_cast<Eigen::Index>(i));
  }
  return select(cloud, indices);
}

// ---------------------------------------------------------------------------
// ClassSchema

ClassSchema::ClassSchema(std::string name, std::vector<std::string> class_names)
    : name_(std::move(name)), class_names_(std::move(class_names)) {
  if (name_.empty()) throw ValidationError("class schema name is empty");
  if (class_names_.empty()) throw ValidationError("class schema '" + name_ + "' has no classes");
  std::set<std::string> seen;
  for (const auto& c : class_names_) {
    if (c.empty()) throw ValidationError("class schema '" + name_ + "' has an empty class name");
    if (!seen.insert(c).second) {
      throw ValidationError("class schema '" + name_ + "' repeats class '" + c + "'");
    }
  }
}

const std::string& ClassSchema::class_name(Label id) const {
  if (id >= class_names_.size()) throw ValidationError("class id out of range for '" + name_ + "'");
  return class_names_[id];
}

std::optional<Label> ClassSchema::find(std::string_view class_name) const {
  for (std::size_t i = 0; i < class_names_.size(); ++i) {
    if (class_names_[i] == class_name) return static_cast<Label>(i);
  }
  return std::nullopt;
}

Label ClassSchema::id_of(std::string_view class_name) const {
  if (auto id = find(class_name)) return *id;
  throw ValidationError("unknown class '" + std::string(class_name) + "' in schema '" + name_ + "'");
}

const ClassSchema& urban5_schema() {
  static const ClassSchema schema("urban5", {"Background", "Building", "Vegetation", "Road", "Water"});
  return schema;
}

const ClassSchema& sensat_urban_schema() {
  static const ClassSchema schema(
      "sensat_urban", {"Ground", "Vegetation", "Building", "Wall", "Bridge", "Parking", "Rail",
                       "Traffic Road", "Street Furniture", "Car", "Footpath", "Bike", "Water"});
  return schema;
}

const ClassSchema& toronto3d_schema() {
  static const ClassSchema schema("toronto3d", {"Unclassified", "Ground", "Road Markings", "Natural",
                                                "Building", "Utility Line", "Pole", "Car", "Fence"});
  return schema;
}

const ClassSchema& synthetic_source_schema() {
  static const ClassSchema schema("synthetic_source", {"Ground", "Vegetation", "Building", "Wall",
                                                       "Road", "Car", "Pole", "Water"});
  return schema;
}

const ClassSchema& builtin_schema(std::string_view name) {
  for (const ClassSchema* s : {&urban5_schema(), &sensat_urban_schema(), &toronto3d_schema(),
                               &synthetic_source_schema()}) {
    if (s->name() == name) return *s;
  }
  throw ValidationError("unknown class schema '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// ClassMap

ClassMap::ClassMap(const ClassSchema& source, const ClassSchema& target, std::vector<Label> mapping)
    : source_schema_(source.name()),
      target_schema_(target.name()),
      target_count_(target.class_count()),
      mapping_(std::move(mapping)) {
  if (mapping_.size() != source.class_count()) {
    throw ValidationError("class map is not total over source schema '" + source_schema_ + "'");
  }
  for (Label t : mapping_) {
    if (t >= target_count_) {
      throw ValidationError("class map image outside target schema '" + target_schema_ + "'");
    }
  }
}

ClassMap ClassMap::from_names(const ClassSchema& source, const ClassSchema& target,
                              const std::map<std::string, std::string>& mapping) {
  std::vector<std::optional<Label>> table(source.class_count());
  for (const auto& [src, dst] : mapping) {
    const Label s = source.id_of(src);
    table[s] = target.id_of(dst);
  }
  std::vector<Label> dense;
  dense.reserve(table.size());
  for (std::size_t s = 0; s < table.size(); ++s) {
    if (!table[s]) {
      throw ValidationError("class map leaves source class '" + source.class_names()[s] +
                            "' unmapped");
    }
    dense.push_back(*table[s]);
  }
  return ClassMap(source, target, std::move(dense));
}

ClassMap ClassMap::identity(const ClassSchema& schema) {
  std::vector<Label> m(schema.class_count());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = static_cast<Label>(i);
  return ClassMap(schema, schema, std::move(m));
}

Label ClassMap::operator()(Label source_id) const {
  if (source_id >= mapping_.size()) throw ValidationError("source label out of range for class map");
  return mapping_[source_id];
}

ClassMap default_sensat_urban_map() {
  return ClassMap::from_names(sensat_urban_schema(), urban5_schema(),
                              {{"Ground", "Background"},
                               {"Vegetation", "Vegetation"},
                               {"Building", "Building"},
                               {"Wall", "Building"},
                               {"Bridge", "Road"},
                               {"Parking", "Road"},
                               {"Rail", "Road"},
                               {"Traffic Road", "Road"},
                               {"Street Furniture", "Background"},
                               {"Car", "Background"},
                               {"Footpath", "Road"},
                               {"Bike", "Background"},
                               {"Water", "Water"}});
}

ClassMap default_toronto3d_map() {
  return ClassMap::from_names(toronto3d_schema(), urban5_schema(),
                              {{"Unclassified", "Background"},
                               {"Ground", "Road"},
                               {"Road Markings", "Road"},
                               {"Natural", "Vegetation"},
                               {"Building", "Building"},
                               {"Utility Line", "Background"},
                               {"Pole", "Background"},
                               {"Car", "Background"},
                               {"Fence", "Background"}});
}

ClassMap default_synthetic_source_map() {
  return ClassMap::from_names(synthetic_source_schema(), urban5_schema(),
                              {{"Ground", "Background"},
                               {"Vegetation", "Vegetation"},
                               {"Building", "Building"},
                               {"Wall", "Building"},
                               {"Road", "Road"},
                               {"Car", "Background"},
                               {"Pole", "Background"},
                               {"Water", "Water"}});
}

ClassSchema load_class_schema_json(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
    return ClassSchema(j.at("name").get<std::string>(),
                       j.at("classes").get<std::vector<std::string>>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("class schema JSON: ") + e.what());
  }
}

ClassMap load_class_map_json(const std::string& json_text, const std::vector<ClassSchema>& schemas) {
  std::string source_name;
  std::string target_name;
  std::map<std::string, std::string> mapping;
  try {
    const auto j = nlohmann::json::parse(json_text);
    source_name = j.at("source").get<std::string>();
    target_name = j.at("target").get<std::string>();
    mapping = j.at("mapping").get<std::map<std::string, std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("class map JSON: ") + e.what());
  }
  auto resolve = [&](const std::string& name) -> const ClassSchema& {
    for (const auto& s : schemas) {
      if (s.name() == name) return s;
    }
    return builtin_schema(name);
  };
  return ClassMap::from_names(resolve(source_name), resolve(target_name), mapping);
}

// ---------------------------------------------------------------------------
// Operations

ValidationReport validate_cloud(const PointCloud& cloud, const ClassSchema& schema) {
  ValidationReport report;
  const auto n = cloud.size();
  if (cloud.colors && cloud.colors->rows() != n) {
    report.violations.push_back("color count differs from point count");
  }
  if (cloud.labels) {
    if (static_cast<Eigen::Index>(cloud.labels->size()) != n) {
      report.violations.push_back("label count differs from point count");
    }
    for (std::size_t i = 0; i < cloud.labels->size(); ++i) {
      if ((*cloud.labels)[i] >= schema.class_count()) {
        report.violations.push_back("label out of range at point " + std::to_string(i));
        break;
      }
    }
  }
  if (!cloud.positions.allFinite()) report.violations.push_back("non-finite coordinate");
  if (!cloud.schema_name.empty() && cloud.schema_name != schema.name()) {
    report.violations.push_back("schema name '" + cloud.schema_name + "' does not match '" +
                                schema.name() + "'");
  }
  return report;
}

PointCloud remap_labels(const PointCloud& cloud, const ClassMap& map) {
  if (cloud.schema_name != map.source_schema()) {
    throw ValidationError("remap_labels: cloud schema '" + cloud.schema_name +
                          "' does not match map source '" + map.source_schema() + "'");
  }
  if (!cloud.labels) throw ValidationError("remap_labels: cloud has no labels");
  PointCloud out = cloud;
  for (Label& l : *out.labels) l = map(l);
  out.schema_name = map.target_schema();
  return out;
}

ClassHistogram class_histogram(const PointCloud& cloud, std::size_t class_count) {
  if (!cloud.labels) throw ValidationError("class_histogram: cloud has no labels");
  return class_histogram(*cloud.labels, class_count);
}

ClassHistogram class_histogram(const PointCloud& cloud, const ClassSchema& schema) {
  return class_histogram(cloud, schema.class_count());
}

}  // namespace urbanseg
