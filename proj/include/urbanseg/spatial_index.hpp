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
#include <vector>

#include "urbanseg/core_model.hpp"

namespace urbanseg {

using IndexTable = Eigen::Matrix<std::int32_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using DistanceTable = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Row i holds the k neighbors of query i, ascending by distance with ties
// broken toward the lower index.
struct NeighborGraph {
  int k = 0;
  IndexTable indices;
  DistanceTable distances;

  Eigen::Index rows() const { return indices.rows(); }
};

enum class SelfPolicy {
  kInclude,  // the query point itself is neighbor 0
  kExclude,  // the query point never appears in its own row
};

// Exact kd-tree over an immutable copy of the positions. Splits on the axis
// of largest extent at the median.
class KdTree {
 public:
  static constexpr int kDefaultLeafSize = 32;

  explicit KdTree(Positions positions, int leaf_size = kDefaultLeafSize);

  Eigen::Index size() const { return points_.rows(); }
  const Positions& points() const { return points_; }
  int leaf_size() const { return leaf_size_; }

  // Exact k nearest tree points of `query`; `skip` (if >= 0) is never
  // reported. Output pairs are (squared distance, index), sorted.
  void nearest(const Eigen::Vector3d& query, int k, std::int64_t skip,
               std::vector<std::pair<double, std::int32_t>>& out) const;

  // All tree points with squared distance <= radius_sq, sorted.
  void within(const Eigen::Vector3d& query, double radius_sq, std::int64_t skip,
              std::vector<std::pair<double, std::int32_t>>& out) const;

  // Every input index appears in exactly one leaf; used by tests.
  std::vector<std::vector<std::int32_t>> leaves() const;

 private:
  struct Node {
    Eigen::Vector3d lo;
    Eigen::Vector3d hi;
    std::int32_t begin = 0;
    std::int32_t end = 0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    int axis = -1;
  };

  std::int32_t build(std::int32_t begin, std::int32_t end);
  double box_distance_sq(const Node& node, const Eigen::Vector3d& q) const;

  Positions points_;
  int leaf_size_;
  std::vector<std::int32_t> order_;
  std::vector<Node> nodes_;
};

// Throws ValidationError on empty or non-finite input.
KdTree build_index(const Positions& positions, int leaf_size = KdTree::kDefaultLeafSize);

// k nearest tree points for arbitrary query positions.
NeighborGraph knn(const KdTree& tree, const Positions& queries, int k);

// k nearest neighbors of every tree point among the tree points.
NeighborGraph knn(const KdTree& tree, int k, SelfPolicy self);

struct RadiusNeighbors {
  std::vector<std::vector<std::int32_t>> indices;
  std::vector<std::vector<double>> distances;
};

// Points within distance <= radius of each query, sorted by distance.
RadiusNeighbors radius_neighbors(const KdTree& tree, const Positions& queries, double radius);
RadiusNeighbors radius_neighbors(const KdTree& tree, double radius, SelfPolicy self);

}  // namespace urbanseg
