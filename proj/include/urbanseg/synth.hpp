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

#include <array>
#include <cstdint>
#include <nlohmann/json.hpp>
#include <optional>
#include <vector>

#include "urbanseg/core_model.hpp"

namespace urbanseg {

using Rgb = std::array<std::uint8_t, 3>;

struct Range {
  double min = 0.0;
  double max = 0.0;
  friend bool operator==(const Range&, const Range&) = default;
};

// Square scene of side `extent` metres anchored at the origin. Densities are
// points per square metre of each class's surface.
struct SceneSpec {
  double extent = 60.0;

  double ground_density = 1.0;
  double building_density = 0.5;
  double vegetation_density = 1.0;
  double road_density = 1.0;
  double water_density = 1.0;

  int building_count = 3;
  Range building_footprint{6.0, 14.0};  // side length
  Range building_height{6.0, 20.0};

  int tree_count = 8;
  Range tree_radius{1.5, 3.5};  // horizontal canopy radius
  Range trunk_height{2.0, 4.0};

  double road_width = 6.0;
  int road_count = 2;  // alternating horizontal / vertical full-length strips

  bool water = true;
  Range water_size{8.0, 14.0};
  double water_level = -0.5;

  double ground_noise = 0.05;  // z jitter (m)
  double color_noise = 10.0;   // per-channel sigma

  // Only used for the richer source scenes.
  int car_count = 4;
  int pole_count = 6;
  double object_density = 4.0;

  // Empty: built-in palette for the schema being generated.
  std::vector<Rgb> class_colors;

  std::uint64_t seed = 0;

  // Throws ValidationError on non-positive extents or densities.
  void validate() const;

  friend bool operator==(const SceneSpec&, const SceneSpec&) = default;
};

void to_json(nlohmann::json& j, const SceneSpec& s);
// Missing keys keep their defaults; unknown keys are rejected.
void from_json(const nlohmann::json& j, SceneSpec& s);

// Labeled five-class scene (Background, Building, Vegetation, Road, Water).
PointCloud generate_scene(const SceneSpec& spec);

// Same layout with walls split from roofs plus cars and poles, labeled in the
// eight-class synthetic source schema.
PointCloud generate_source_scene(const SceneSpec& spec);
PointCloud generate_source_scene(const SceneSpec& spec, const ClassSchema& source_schema);

// Footprints of the generated structures, for tests and fixtures.
struct SceneLayout {
  struct Box {
    double x0, y0, x1, y1, height;
  };
  struct Tree {
    double x, y, radius, vertical_radius, base;
  };
  std::vector<Box> buildings;
  std::vector<Box> roads;  // height unused
  std::optional<Box> water;
  std::vector<Tree> trees;
};

SceneLayout scene_layout(const SceneSpec& spec);

}  // namespace urbanseg
