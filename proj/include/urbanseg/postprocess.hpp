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
#include <limits>
#include <map>
#include <nlohmann/json.hpp>
#include <string>
#include <utility>
#include <vector>

#include "urbanseg/core_model.hpp"
#include "urbanseg/spatial_index.hpp"

namespace urbanseg {

struct FilterReport {
  std::string filter;
  std::size_t points_in = 0;
  std::size_t points_out = 0;
  std::size_t points_removed = 0;
  std::size_t points_relabeled = 0;
  // Per class id: count after minus count before.
  std::map<Label, std::int64_t> class_deltas;

  bool balanced() const { return points_in == points_out + points_removed; }
};

void to_json(nlohmann::json& j, const FilterReport& r);

using FilterResult = std::pair<PointCloud, FilterReport>;

// Removes points whose mean distance to their k nearest others exceeds
// mean + std_ratio * stddev (population) of that statistic.
FilterResult statistical_outlier_removal(const PointCloud& cloud, int k = 16, double std_ratio = 1.0);

// Removes points with fewer than min_neighbors others within distance <= radius.
FilterResult radius_outlier_removal(const PointCloud& cloud, double radius = 1.0, int min_neighbors = 4);

// One point per occupied voxel floor(p / size): centroid, rounded mean color,
// majority label (ties to the lowest id). Voxels appear in order of their
// first member.
FilterResult voxel_downsample(const PointCloud& cloud, double voxel_size = 0.5);

enum class Morphology { kErode, kDilate };

// Single synchronous pass over `graph` (row i = neighbors of point i).
// Dilate: a point becomes `target` when at least `threshold` neighbors are
// `target`. Erode: a `target` point with fewer than `threshold` such
// neighbors takes the majority of its non-target neighbors' labels.
FilterResult morphological_label_filter(const PointCloud& cloud, const NeighborGraph& graph, Morphology mode,
                                        Label target, int threshold);
// Builds a k-NN graph (self excluded) first.
FilterResult morphological_label_filter(const PointCloud& cloud, int k, Morphology mode, Label target,
                                        int threshold);

class GroundModel {
 public:
  GroundModel(double cell_size, Eigen::Vector2d origin, Eigen::Index nx, Eigen::Index ny,
              Eigen::MatrixXd elevations);

  double cell_size() const { return cell_size_; }
  const Eigen::Vector2d& origin() const { return origin_; }
  // (nx, ny) grid; NaN marks empty cells.
  const Eigen::MatrixXd& elevations() const { return elevations_; }

  // Elevation of the cell containing (x, y); empty or outside cells use the
  // non-empty cell whose center is nearest (lowest cell index on ties).
  double elevation(double x, double y) const;

 private:
  double cell_size_;
  Eigen::Vector2d origin_;
  Eigen::MatrixXd elevations_;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> filled_;
  std::vector<double> filled_elevation_;
  std::vector<std::int32_t> fallback_;  // per cell (ix * ny + iy): index into filled_
};

// Per cell, the given percentile of member z values (linear interpolation
// between order statistics).
GroundModel build_ground_model(const PointCloud& cloud, double cell_size = 2.0, double percentile = 5.0);

struct HeightRule {
  enum class Action { kRelabel, kRemove };

  Label label = 0;
  // Matches when min_height <= height < max_height.
  double min_height = -std::numeric_limits<double>::infinity();
  double max_height = std::numeric_limits<double>::infinity();
  Action action = Action::kRelabel;
  Label relabel_to = 0;
};

// {"class": name, "min_height"?, "max_height"?, "action": "relabel"|"remove", "to"?: name}
std::vector<HeightRule> height_rules_from_json(const nlohmann::json& j, const ClassSchema& schema);

// First matching rule per point wins.
FilterResult height_filter(const PointCloud& cloud, const GroundModel& ground, const std::vector<HeightRule>& rules);

// max z - min z over neighbors within radius (self included).
std::vector<double> local_height_variation(const PointCloud& cloud, double radius);

// Runs an ordered list of filter steps, e.g.
// {"steps": [{"filter": "statistical", "k": 16, "std_ratio": 1.0}, ...]}.
// Filters: statistical, radius, voxel, morphology, height.
std::pair<PointCloud, std::vector<FilterReport>> run_filter_pipeline(const PointCloud& cloud,
                                                                     const nlohmann::json& pipeline,
                                                                     const ClassSchema& schema);

}  // namespace urbanseg
