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
#include <utility>
#include <vector>

#include "urbanseg/core_model.hpp"
#include "urbanseg/layer_config.hpp"
#include "urbanseg/ply_io.hpp"
#include "urbanseg/spatial_index.hpp"

namespace urbanseg {

inline constexpr double kDefaultTileSize = 250.0;
inline constexpr std::size_t kDeskBatchPoints = 4096;
inline constexpr std::size_t kProductionBatchPoints = 1000000;

// SplitMix64 finalizer; derives independent stream seeds from (seed, stream).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

using TileKey = std::pair<std::int64_t, std::int64_t>;

struct TileGrid {
  double tile_size = kDefaultTileSize;
  Eigen::Vector2d origin = Eigen::Vector2d::Zero();
  // Only non-empty tiles; point indices ascending within each tile.
  std::map<TileKey, std::vector<Eigen::Index>> tiles;
};

// Partitions points by floor((xy - origin) / tile_size), origin = XY min corner.
TileGrid tile(const PointCloud& cloud, double tile_size);

struct Resampled {
  PointCloud cloud;
  // Row r of `cloud` came from source row source_indices[r].
  std::vector<Eigen::Index> source_indices;
};

// Exactly n_points rows. N >= n: uniform subsample without replacement in
// ascending source order. N < n: all originals, then uniform draws with
// replacement.
Resampled resample_to_count(const PointCloud& cloud, std::size_t n_points, std::uint64_t seed);

struct CenterTransform {
  Eigen::Vector3d offset = Eigen::Vector3d::Zero();  // subtracted centroid

  Positions apply(const Positions& p) const;
  Positions invert(const Positions& p) const;
};

std::pair<PointCloud, CenterTransform> center_and_scale(const PointCloud& cloud);

// `ceil(n / ratio)` distinct indices in [0, n), uniformly without
// replacement, ascending.
std::vector<std::int32_t> random_downsample(std::size_t n, int ratio, std::uint64_t seed);

struct Batch {
  // Centered, resampled points; `cloud.size()` equals the batch size.
  PointCloud cloud;
  CenterTransform transform;
  std::vector<Eigen::Index> source_indices;
  TileKey tile_id{0, 0};
  std::uint64_t seed = 0;

  // Per encoder stage l: positions entering the stage, the self-inclusive
  // KNN graph over them, the retained subset for stage l+1, and for every
  // stage-l point its nearest retained point (decoder upsampling).
  std::vector<Positions> level_positions;
  std::vector<NeighborGraph> graphs;
  std::vector<std::vector<std::int32_t>> downsample;
  std::vector<std::vector<std::int32_t>> upsample;

  std::size_t size() const { return static_cast<std::size_t>(cloud.size()); }
};

Batch make_batch(const PointCloud& tile_cloud, std::size_t n_points, const LayerConfig& config,
                 std::uint64_t seed, TileKey tile_id = {0, 0});

// Network input features: centered z divided by the batch radius, rgb / 255
// (zero without colors), color-presence flag.
inline constexpr int kInputFeatureCount = 5;
Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> input_features(const Batch& batch);

// Serialization through the PCB1 bundle and back.
ArrayBundle batch_to_bundle(const Batch& batch);
Batch batch_from_bundle(const ArrayBundle& bundle);

}  // namespace urbanseg
