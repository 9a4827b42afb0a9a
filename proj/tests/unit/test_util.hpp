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

// Shared fixtures and brute-force oracles for the unit and acceptance suites.
// The oracles here are deliberately naive so they stay independent of the
// library code paths they check.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <utility>
#include <vector>

#include "urbanseg/core_model.hpp"

namespace urbanseg::testing {

inline PointCloud random_cloud(std::size_t n, std::uint64_t seed, double extent = 1.0,
                               bool colors = true, std::size_t classes = 5,
                               std::string schema = "urban5") {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, extent);
  std::uniform_int_distribution<int> c(0, 255);
  std::uniform_int_distribution<Label> l(0, static_cast<Label>(classes - 1));
  PointCloud cloud;
  cloud.schema_name = std::move(schema);
  cloud.positions.resize(static_cast<Eigen::Index>(n), 3);
  if (colors) cloud.colors.emplace(static_cast<Eigen::Index>(n), 3);
  cloud.labels.emplace(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    for (int d = 0; d < 3; ++d) cloud.positions(r, d) = u(rng);
    if (colors) {
      for (int d = 0; d < 3; ++d) (*cloud.colors)(r, d) = static_cast<std::uint8_t>(c(rng));
    }
    (*cloud.labels)[i] = l(rng);
  }
  return cloud;
}

inline double brute_distance_sq(const Positions& a, Eigen::Index i, const Positions& b,
                                 Eigen::Index j) {
  const double dx = a(i, 0) - b(j, 0);
  const double dy = a(i, 1) - b(j, 1);
  const double dz = a(i, 2) - b(j, 2);
  return dx * dx + dy * dy + dz * dz;
}

// O(N^2) exact k nearest of each query among `points`, sorted by
// (squared distance, index). `exclude_self` drops j == i.
inline std::vector<std::vector<std::int32_t>> brute_knn(const Positions& points,
                                                        const Positions& queries, int k,
                                                        bool exclude_self) {
  std::vector<std::vector<std::int32_t>> rows;
  for (Eigen::Index i = 0; i < queries.rows(); ++i) {
    std::vector<std::pair<double, std::int32_t>> all;
    for (Eigen::Index j = 0; j < points.rows(); ++j) {
      if (exclude_self && j == i) continue;
      all.emplace_back(brute_distance_sq(queries, i, points, j), static_cast<std::int32_t>(j));
    }
    std::sort(all.begin(), all.end());
    std::vector<std::int32_t> row;
    for (int j = 0; j < k; ++j) row.push_back(all[static_cast<std::size_t>(j)].second);
    rows.push_back(std::move(row));
  }
  return rows;
}

// Self-inclusive variant: the query itself first, then k-1 nearest others.
inline std::vector<std::vector<std::int32_t>> brute_knn_with_self(const Positions& points, int k) {
  auto others = brute_knn(points, points, k - 1, true);
  for (std::size_t i = 0; i < others.size(); ++i) {
    others[i].insert(others[i].begin(), static_cast<std::int32_t>(i));
  }
  return others;
}

inline std::vector<std::vector<std::int32_t>> brute_radius(const Positions& points, double r,
                                                           bool exclude_self) {
  std::vector<std::vector<std::int32_t>> rows;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    std::vector<std::pair<double, std::int32_t>> hits;
    for (Eigen::Index j = 0; j < points.rows(); ++j) {
      if (exclude_self && j == i) continue;
      const double d2 = brute_distance_sq(points, i, points, j);
      if (d2 <= r * r) hits.emplace_back(d2, static_cast<std::int32_t>(j));
    }
    std::sort(hits.begin(), hits.end());
    std::vector<std::int32_t> row;
    for (auto& h : hits) row.push_back(h.second);
    rows.push_back(std::move(row));
  }
  return rows;
}

// Keep-mask for statistical outlier removal, from the full distance matrix.
inline std::vector<bool> brute_sor_keep(const Positions& points, int k, double ratio) {
  const auto n = static_cast<std::size_t>(points.rows());
  std::vector<double> md(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> d;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) d.push_back(std::sqrt(brute_distance_sq(points, static_cast<Eigen::Index>(i), points,
                                                          static_cast<Eigen::Index>(j))));
    }
    std::sort(d.begin(), d.end());
    double s = 0.0;
    for (int j = 0; j < k; ++j) s += d[static_cast<std::size_t>(j)];
    md[i] = s / k;
  }
  double mu = 0.0;
  for (double v : md) mu += v;
  mu /= static_cast<double>(n);
  double var = 0.0;
  for (double v : md) var += (v - mu) * (v - mu);
  const double cut = mu + ratio * std::sqrt(var / static_cast<double>(n));
  std::vector<bool> keep(n);
  for (std::size_t i = 0; i < n; ++i) keep[i] = md[i] <= cut;
  return keep;
}

// Keep-mask for radius outlier removal: at least `min_others` others within r.
inline std::vector<bool> brute_ror_keep(const Positions& points, double r, int min_others) {
  std::vector<bool> keep;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    int c = 0;
    for (Eigen::Index j = 0; j < points.rows(); ++j) c += j != i && brute_distance_sq(points, i, points, j) <= r * r;
    keep.push_back(c >= min_others);
  }
  return keep;
}

struct VoxelGroup {
  std::array<double, 3> key{};
  Eigen::Vector3d lo, hi;  // member bounding box
  std::vector<Label> labels;
};

// Points grouped by floor(p / size), groups in order of first member.
inline std::vector<VoxelGroup> brute_voxel_groups(const PointCloud& cloud, double size) {
  std::vector<VoxelGroup> groups;
  for (Eigen::Index i = 0; i < cloud.size(); ++i) {
    std::array<double, 3> k{};
    for (int d = 0; d < 3; ++d) k[static_cast<std::size_t>(d)] = std::floor(cloud.positions(i, d) / size);
    auto it = std::find_if(groups.begin(), groups.end(), [&](const VoxelGroup& g) { return g.key == k; });
    const Eigen::Vector3d p = cloud.positions.row(i).transpose();
    if (it == groups.end()) {
      groups.push_back({k, p, p, {}});
      it = groups.end() - 1;
    }
    it->lo = it->lo.cwiseMin(p);
    it->hi = it->hi.cwiseMax(p);
    if (cloud.labels) it->labels.push_back((*cloud.labels)[static_cast<std::size_t>(i)]);
  }
  return groups;
}

// Most frequent label, ties to the lowest id.
inline Label majority_label(const std::vector<Label>& labels) {
  std::map<Label, int> votes;
  for (Label l : labels) ++votes[l];
  Label best = 0;
  int n = -1;
  for (const auto& [l, c] : votes) {
    if (c > n) {
      best = l;
      n = c;
    }
  }
  return best;
}

}  // namespace urbanseg::testing
