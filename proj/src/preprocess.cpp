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

#include "urbanseg/preprocess.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "urbanseg/errors.hpp"

namespace urbanseg {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

TileGrid tile(const PointCloud& cloud, double tile_size) {
  if (!(tile_size > 0.0) || !std::isfinite(tile_size)) {
    throw ValidationError("tile size must be positive, got " + std::to_string(tile_size));
  }
  TileGrid grid;
  grid.tile_size = tile_size;
  if (cloud.empty()) return grid;
  grid.origin = cloud.positions.leftCols<2>().colwise().minCoeff().transpose();
  for (Eigen::Index i = 0; i < cloud.size(); ++i) {
    const Eigen::Vector2d rel = (cloud.positions.row(i).head<2>().transpose() - grid.origin) / tile_size;
    if (!rel.allFinite()) throw ValidationError("non-finite coordinate at point " + std::to_string(i));
    const TileKey key{static_cast<std::int64_t>(std::floor(rel.x())),
                      static_cast<std::int64_t>(std::floor(rel.y()))};
    grid.tiles[key].push_back(i);
  }
  return grid;
}

namespace {

// Ascending k-subset of [0, n), uniform without replacement.
template <typename Int>
std::vector<Int> sample_sorted(std::size_t n, std::size_t k, std::uint64_t seed) {
  std::vector<Int> all(n);
  std::iota(all.begin(), all.end(), Int{0});
  std::vector<Int> out;
  out.reserve(k);
  std::mt19937_64 rng(seed);
  std::sample(all.begin(), all.end(), std::back_inserter(out), k, rng);
  return out;
}

}  // namespace

Resampled resample_to_count(const PointCloud& cloud, std::size_t n_points, std::uint64_t seed) {
  if (cloud.empty()) throw ValidationError("resample: empty input cloud");
  if (n_points == 0) throw ValidationError("resample: n_points must be >= 1");
  const auto n = static_cast<std::size_t>(cloud.size());
  Resampled out;
  if (n >= n_points) {
    out.source_indices = n == n_points ? sample_sorted<Eigen::Index>(n, n, 0)
                                       : sample_sorted<Eigen::Index>(n, n_points, seed);
  } else {
    out.source_indices.resize(n);
    std::iota(out.source_indices.begin(), out.source_indices.end(), Eigen::Index{0});
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<Eigen::Index> pick(0, static_cast<Eigen::Index>(n) - 1);
    while (out.source_indices.size() < n_points) out.source_indices.push_back(pick(rng));
  }
  out.cloud = select(cloud, out.source_indices);
  return out;
}

Positions CenterTransform::apply(const Positions& p) const { return p.rowwise() - offset.transpose(); }

Positions CenterTransform::invert(const Positions& p) const { return p.rowwise() + offset.transpose(); }

std::pair<PointCloud, CenterTransform> center_and_scale(const PointCloud& cloud) {
  CenterTransform t;
  if (!cloud.empty()) {
    t.offset = cloud.positions.colwise().mean().transpose();
    // Second pass picks up the rounding left by the first.
    t.offset += (cloud.positions.rowwise() - t.offset.transpose()).colwise().mean().transpose();
  }
  PointCloud out = cloud;
  out.positions = t.apply(cloud.positions);
  return {std::move(out), t};
}

std::vector<std::int32_t> random_downsample(std::size_t n, int ratio, std::uint64_t seed) {
  if (ratio < 2) throw ValidationError("random_downsample: ratio must be >= 2");
  if (n < static_cast<std::size_t>(ratio)) {
    throw ValidationError("random_downsample: " + std::to_string(n) + " points is fewer than ratio " +
                          std::to_string(ratio));
  }
  if (n > static_cast<std::size_t>(std::numeric_limits<std::int32_t>::max())) {
    throw ValidationError("random_downsample: point count exceeds int32 range");
  }
  const std::size_t keep = (n + static_cast<std::size_t>(ratio) - 1) / static_cast<std::size_t>(ratio);
  return sample_sorted<std::int32_t>(n, keep, seed);
}

Batch make_batch(const PointCloud& tile_cloud, std::size_t n_points, const LayerConfig& config,
                 std::uint64_t seed, TileKey tile_id) {
  const auto sizes = config.level_sizes(n_points);
  Batch b;
  b.tile_id = tile_id;
  b.seed = seed;
  Resampled rs = resample_to_count(tile_cloud, n_points, derive_seed(seed, 0));
  b.source_indices = std::move(rs.source_indices);
  auto [centered, transform] = center_and_scale(rs.cloud);
  b.cloud = std::move(centered);
  b.transform = transform;

  Positions current = b.cloud.positions;
  for (std::size_t l = 0; l < sizes.size(); ++l) {
    const KdTree tree = build_index(current);
    b.graphs.push_back(knn(tree, config.k, SelfPolicy::kInclude));
    auto keep = random_downsample(static_cast<std::size_t>(current.rows()), config.decimation_ratio,
                                  derive_seed(seed, l + 1));
    Positions coarse(static_cast<Eigen::Index>(keep.size()), 3);
    for (std::size_t r = 0; r < keep.size(); ++r) coarse.row(static_cast<Eigen::Index>(r)) = current.row(keep[r]);
    const NeighborGraph up = knn(build_index(coarse), current, 1);
    b.upsample.emplace_back(up.indices.data(), up.indices.data() + up.indices.size());
    b.downsample.push_back(std::move(keep));
    b.level_positions.push_back(std::move(current));
    current = std::move(coarse);
  }
  return b;
}

Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> input_features(const Batch& batch) {
  const Eigen::Index n = batch.cloud.size();
  Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> f =
      Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>::Zero(n, kInputFeatureCount);
  // Height only, scaled by the batch radius. Absolute x/y let the network
  // memorise where things sit in the few training tiles instead of learning
  // what they look like; geometry still reaches it through LocSE.
  const double radius = n > 0 ? batch.cloud.positions.rowwise().norm().maxCoeff() : 0.0;
  const double inv = radius > 0.0 ? 1.0 / radius : 1.0;
  f.col(0) = (batch.cloud.positions.col(2) * inv).cast<float>();
  if (batch.cloud.colors) {
    f.middleCols<3>(1) = batch.cloud.colors->cast<float>() / 255.0f;
    f.col(4).setOnes();
  }
  return f;
}

namespace {

std::string level_name(std::size_t l, const char* what) { return "level" + std::to_string(l) + "." + what; }

}  // namespace

ArrayBundle batch_to_bundle(const Batch& batch) {
  ArrayBundle out = cloud_to_bundle(batch.cloud);
  std::vector<std::int64_t> src(batch.source_indices.begin(), batch.source_indices.end());
  out.add<std::int64_t>("source_indices", {src.size()}, src);
  out.add<double>("transform_offset", {3}, std::span(batch.transform.offset.data(), 3));
  const std::vector<std::int64_t> meta{batch.tile_id.first, batch.tile_id.second,
                                       std::bit_cast<std::int64_t>(batch.seed)};
  out.add<std::int64_t>("tile_and_seed", {3}, meta);
  for (std::size_t l = 0; l < batch.graphs.size(); ++l) {
    out.add_matrix(level_name(l, "positions"), batch.level_positions[l]);
    out.add_matrix(level_name(l, "neighbor_indices"), batch.graphs[l].indices);
    out.add_matrix(level_name(l, "neighbor_distances"), batch.graphs[l].distances);
    out.add<std::int32_t>(level_name(l, "downsample"), {batch.downsample[l].size()}, batch.downsample[l]);
    out.add<std::int32_t>(level_name(l, "upsample"), {batch.upsample[l].size()}, batch.upsample[l]);
  }
  return out;
}

Batch batch_from_bundle(const ArrayBundle& bundle) {
  Batch b;
  b.cloud = cloud_from_bundle(bundle);
  const auto src = bundle.get<std::int64_t>("source_indices");
  b.source_indices.assign(src.begin(), src.end());
  const auto offset = bundle.get<double>("transform_offset");
  const auto meta = bundle.get<std::int64_t>("tile_and_seed");
  if (offset.size() != 3 || meta.size() != 3) throw FormatError("batch bundle: bad metadata arrays");
  b.transform.offset = Eigen::Vector3d(offset[0], offset[1], offset[2]);
  b.tile_id = {meta[0], meta[1]};
  b.seed = std::bit_cast<std::uint64_t>(meta[2]);
  for (std::size_t l = 0; bundle.contains(level_name(l, "positions")); ++l) {
    Positions p = bundle.get_matrix<double>(level_name(l, "positions"));
    NeighborGraph g;
    g.indices = bundle.get_matrix<std::int32_t>(level_name(l, "neighbor_indices"));
    g.distances = bundle.get_matrix<double>(level_name(l, "neighbor_distances"));
    g.k = static_cast<int>(g.indices.cols());
    if (p.cols() != 3 || g.indices.rows() != p.rows() || g.distances.rows() != p.rows() ||
        g.distances.cols() != g.indices.cols()) {
      throw FormatError("batch bundle: level " + std::to_string(l) + " shape mismatch");
    }
    b.downsample.push_back(bundle.get<std::int32_t>(level_name(l, "downsample")));
    b.upsample.push_back(bundle.get<std::int32_t>(level_name(l, "upsample")));
    if (static_cast<Eigen::Index>(b.upsample.back().size()) != p.rows()) {
      throw FormatError("batch bundle: level " + std::to_string(l) + " upsample size mismatch");
    }
    b.level_positions.push_back(std::move(p));
    b.graphs.push_back(std::move(g));
  }
  return b;
}

}  // namespace urbanseg
