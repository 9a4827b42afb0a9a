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

#include "urbanseg/spatial_index.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "urbanseg/parallel.hpp"

namespace urbanseg {

namespace {

using Candidate = std::pair<double, std::int32_t>;

inline double distance_sq(const Eigen::Vector3d& q, const Positions& pts, Eigen::Index i) {
  const double dx = q.x() - pts(i, 0);
  const double dy = q.y() - pts(i, 1);
  const double dz = q.z() - pts(i, 2);
  return dx * dx + dy * dy + dz * dz;
}

}  // namespace

KdTree::KdTree(Positions positions, int leaf_size)
    : points_(std::move(positions)), leaf_size_(std::max(1, leaf_size)) {
  if (points_.rows() == 0) throw ValidationError("build_index: empty point set");
  if (!points_.allFinite()) throw ValidationError("build_index: non-finite coordinates");
  if (points_.rows() > std::numeric_limits<std::int32_t>::max()) {
    throw ValidationError("build_index: too many points");
  }
  order_.resize(static_cast<std::size_t>(points_.rows()));
  std::iota(order_.begin(), order_.end(), 0);
  nodes_.reserve(2 * (order_.size() / static_cast<std::size_t>(leaf_size_) + 1));
  build(0, static_cast<std::int32_t>(order_.size()));
}

std::int32_t KdTree::build(std::int32_t begin, std::int32_t end) {
  Node node;
  node.begin = begin;
  node.end = end;
  node.lo = points_.row(order_[begin]).transpose();
  node.hi = node.lo;
  for (std::int32_t i = begin + 1; i < end; ++i) {
    const Eigen::Vector3d p = points_.row(order_[i]).transpose();
    node.lo = node.lo.cwiseMin(p);
    node.hi = node.hi.cwiseMax(p);
  }
  const auto id = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back(node);
  if (end - begin <= leaf_size_) return id;

  int axis = 0;
  (node.hi - node.lo).maxCoeff(&axis);
  if (node.hi[axis] == node.lo[axis]) return id;  // all points coincide

  const std::int32_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::int32_t a, std::int32_t b) {
                     const double ca = points_(a, axis);
                     const double cb = points_(b, axis);
                     return ca < cb || (ca == cb && a < b);
                   });
  const std::int32_t left = build(begin, mid);
  const std::int32_t right = build(mid, end);
  nodes_[id].axis = axis;
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

double KdTree::box_distance_sq(const Node& node, const Eigen::Vector3d& q) const {
  double d2 = 0.0;
  for (int a = 0; a < 3; ++a) {
    double d = 0.0;
    if (q[a] < node.lo[a]) {
      d = node.lo[a] - q[a];
    } else if (q[a] > node.hi[a]) {
      d = q[a] - node.hi[a];
    }
    d2 += d * d;
  }
  return d2;
}

void KdTree::nearest(const Eigen::Vector3d& query, int k, std::int64_t skip,
                     std::vector<Candidate>& out) const {
  out.clear();
  if (k <= 0) return;
  const auto cap = static_cast<std::size_t>(k);
  // Max-heap on (distance, index): the front is the current worst.
  std::vector<std::int32_t> stack{0};
  while (!stack.empty()) {
    const Node& node = nodes_[static_cast<std::size_t>(stack.back())];
    stack.pop_back();
    if (out.size() == cap && box_distance_sq(node, query) > out.front().first) continue;
    if (node.left < 0) {
      for (std::int32_t i = node.begin; i < node.end; ++i) {
        const std::int32_t idx = order_[static_cast<std::size_t>(i)];
        if (idx == skip) continue;
        const Candidate c{distance_sq(query, points_, idx), idx};
        if (out.size() < cap) {
          out.push_back(c);
          std::push_heap(out.begin(), out.end());
        } else if (c < out.front()) {
          std::pop_heap(out.begin(), out.end());
          out.back() = c;
          std::push_heap(out.begin(), out.end());
        }
      }
      continue;
    }
    const Node& l = nodes_[static_cast<std::size_t>(node.left)];
    const Node& r = nodes_[static_cast<std::size_t>(node.right)];
    // Push the farther child first so the nearer one is explored first.
    if (box_distance_sq(l, query) <= box_distance_sq(r, query)) {
      stack.push_back(node.right);
      stack.push_back(node.left);
    } else {
      stack.push_back(node.left);
      stack.push_back(node.right);
    }
  }
  std::sort_heap(out.begin(), out.end());
}

void KdTree::within(const Eigen::Vector3d& query, double radius_sq, std::int64_t skip,
                    std::vector<Candidate>& out) const {
  out.clear();
  std::vector<std::int32_t> stack{0};
  while (!stack.empty()) {
    const Node& node = nodes_[static_cast<std::size_t>(stack.back())];
    stack.pop_back();
    if (box_distance_sq(node, query) > radius_sq) continue;
    if (node.left < 0) {
      for (std::int32_t i = node.begin; i < node.end; ++i) {
        const std::int32_t idx = order_[static_cast<std::size_t>(i)];
        if (idx == skip) continue;
        const double d2 = distance_sq(query, points_, idx);
        if (d2 <= radius_sq) out.emplace_back(d2, idx);
      }
      continue;
    }
    stack.push_back(node.left);
    stack.push_back(node.right);
  }
  std::sort(out.begin(), out.end());
}

std::vector<std::vector<std::int32_t>> KdTree::leaves() const {
  std::vector<std::vector<std::int32_t>> result;
  for (const Node& n : nodes_) {
    if (n.left >= 0) continue;
    result.emplace_back(order_.begin() + n.begin, order_.begin() + n.end);
  }
  return result;
}

KdTree build_index(const Positions& positions, int leaf_size) { return KdTree(positions, leaf_size); }

namespace {

NeighborGraph make_graph(Eigen::Index rows, int k) {
  NeighborGraph g;
  g.k = k;
  g.indices.resize(rows, k);
  g.distances.resize(rows, k);
  return g;
}

void check_k(int k, Eigen::Index available) {
  if (k < 1) throw ValidationError("knn: k must be >= 1");
  if (k > available) {
    throw ValidationError("knn: k=" + std::to_string(k) + " exceeds the " +
                          std::to_string(available) + " available candidates");
  }
}

}  // namespace

NeighborGraph knn(const KdTree& tree, const Positions& queries, int k) {
  check_k(k, tree.size());
  NeighborGraph g = make_graph(queries.rows(), k);
  parallel_for(static_cast<std::size_t>(queries.rows()), [&](std::size_t row) {
    const auto r = static_cast<Eigen::Index>(row);
    thread_local std::vector<Candidate> found;
    tree.nearest(queries.row(r).transpose(), k, -1, found);
    for (int j = 0; j < k; ++j) {
      g.indices(r, j) = found[static_cast<std::size_t>(j)].second;
      g.distances(r, j) = std::sqrt(found[static_cast<std::size_t>(j)].first);
    }
  });
  return g;
}

NeighborGraph knn(const KdTree& tree, int k, SelfPolicy self) {
  const Eigen::Index n = tree.size();
  check_k(k, self == SelfPolicy::kInclude ? n : n - 1);
  NeighborGraph g = make_graph(n, k);
  const Positions& pts = tree.points();
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t row) {
    const auto r = static_cast<Eigen::Index>(row);
    thread_local std::vector<Candidate> found;
    int offset = 0;
    if (self == SelfPolicy::kInclude) {
      g.indices(r, 0) = static_cast<std::int32_t>(r);
      g.distances(r, 0) = 0.0;
      offset = 1;
    }
    tree.nearest(pts.row(r).transpose(), k - offset, r, found);
    for (int j = offset; j < k; ++j) {
      const Candidate& c = found[static_cast<std::size_t>(j - offset)];
      g.indices(r, j) = c.second;
      g.distances(r, j) = std::sqrt(c.first);
    }
  });
  return g;
}

namespace {

RadiusNeighbors radius_impl(const KdTree& tree, const Positions& queries, double radius,
                            bool skip_self) {
  if (!(radius > 0.0)) throw ValidationError("radius_neighbors: radius must be positive");
  const double r2 = radius * radius;
  RadiusNeighbors out;
  const auto n = static_cast<std::size_t>(queries.rows());
  out.indices.resize(n);
  out.distances.resize(n);
  parallel_for(n, [&](std::size_t row) {
    thread_local std::vector<Candidate> found;
    const auto r = static_cast<Eigen::Index>(row);
    tree.within(queries.row(r).transpose(), r2, skip_self ? r : -1, found);
    auto& idx = out.indices[row];
    auto& dist = out.distances[row];
    idx.reserve(found.size());
    dist.reserve(found.size());
    for (const auto& [d2, i] : found) {
      idx.push_back(i);
      dist.push_back(std::sqrt(d2));
    }
  });
  return out;
}

}  // namespace

RadiusNeighbors radius_neighbors(const KdTree& tree, const Positions& queries, double radius) {
  return radius_impl(tree, queries, radius, false);
}

RadiusNeighbors radius_neighbors(const KdTree& tree, double radius, SelfPolicy self) {
  return radius_impl(tree, tree.points(), radius, self == SelfPolicy::kExclude);
}

}  // namespace urbanseg
