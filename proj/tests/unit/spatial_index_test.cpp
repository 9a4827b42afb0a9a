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

#include <gtest/gtest.h>

#include <limits>
#include <numeric>
#include <set>

#include "urbanseg/parallel.hpp"
#include "test_util.hpp"

namespace urbanseg {
namespace {

Positions collinear4() {
  Positions p(4, 3);
  p << 0, 0, 0, 1, 0, 0, 2, 0, 0, 3, 0, 0;
  return p;
}

std::vector<std::int32_t> row_of(const NeighborGraph& g, Eigen::Index r) {
  std::vector<std::int32_t> out;
  for (int j = 0; j < g.k; ++j) out.push_back(g.indices(r, j));
  return out;
}

TEST(BuildIndexTest, SinglePoint) {
  const auto tree = build_index(Positions::Zero(1, 3));
  EXPECT_EQ(tree.size(), 1);
  const auto g = knn(tree, 1, SelfPolicy::kInclude);
  EXPECT_EQ(g.indices(0, 0), 0);
  const auto q = knn(tree, Positions::Zero(1, 3), 1);
  EXPECT_EQ(q.indices(0, 0), 0);
}

TEST(BuildIndexTest, Errors) {
  EXPECT_THROW(build_index(Positions(0, 3)), ValidationError);
  Positions bad = Positions::Zero(2, 3);
  bad(1, 2) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(build_index(bad), ValidationError);
}

TEST(BuildIndexTest, EveryIndexInExactlyOneLeaf) {
  const auto cloud = testing::random_cloud(5000, 3);
  const KdTree tree(cloud.positions, 7);
  std::vector<int> seen(5000, 0);
  for (const auto& leaf : tree.leaves()) {
    EXPECT_LE(leaf.size(), 7u);
    for (auto i : leaf) ++seen[static_cast<std::size_t>(i)];
  }
  for (int s : seen) ASSERT_EQ(s, 1);
}

TEST(KnnTest, CollinearSelfExcluded) {
  const auto tree = build_index(collinear4());
  const auto g = knn(tree, 2, SelfPolicy::kExclude);
  EXPECT_EQ(row_of(g, 0), (std::vector<std::int32_t>{1, 2}));
  EXPECT_DOUBLE_EQ(g.distances(0, 1), 2.0);
}

TEST(KnnTest, DuplicatesBreakTowardLowerIndex) {
  Positions p(5, 3);
  p << 1, 1, 1, 0, 0, 0, 1, 1, 1, 1, 1, 1, 5, 5, 5;
  const auto tree = build_index(p);
  const auto q = knn(tree, Positions::Ones(1, 3), 3);
  EXPECT_EQ(row_of(q, 0), (std::vector<std::int32_t>{0, 2, 3}));
  const auto g = knn(tree, 2, SelfPolicy::kExclude);
  EXPECT_EQ(row_of(g, 3), (std::vector<std::int32_t>{0, 2}));
}

TEST(KnnTest, FullRowIsPermutation) {
  const auto cloud = testing::random_cloud(40, 5);
  const auto g = knn(build_index(cloud.positions, 4), 40, SelfPolicy::kInclude);
  for (Eigen::Index r = 0; r < 40; ++r) {
    auto row = row_of(g, r);
    EXPECT_EQ(row[0], r);
    std::sort(row.begin(), row.end());
    std::vector<std::int32_t> expected(40);
    std::iota(expected.begin(), expected.end(), 0);
    EXPECT_EQ(row, expected);
  }
}

TEST(KnnTest, KTooLarge) {
  const auto tree = build_index(collinear4());
  EXPECT_THROW(knn(tree, 4, SelfPolicy::kExclude), ValidationError);
  EXPECT_THROW(knn(tree, 5, SelfPolicy::kInclude), ValidationError);
  EXPECT_THROW(knn(tree, collinear4(), 5), ValidationError);
  EXPECT_THROW(knn(tree, 0, SelfPolicy::kInclude), ValidationError);
}

TEST(KnnTest, MatchesBruteForceOracle) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto cloud = testing::random_cloud(1000, seed);
    const auto tree = build_index(cloud.positions);
    const auto g = knn(tree, 16, SelfPolicy::kExclude);
    const auto oracle = testing::brute_knn(cloud.positions, cloud.positions, 16, true);
    for (Eigen::Index r = 0; r < 1000; ++r) {
      ASSERT_EQ(row_of(g, r), oracle[static_cast<std::size_t>(r)]) << "row " << r;
      for (int j = 1; j < 16; ++j) ASSERT_LE(g.distances(r, j - 1), g.distances(r, j));
    }
    const auto gs = knn(tree, 16, SelfPolicy::kInclude);
    const auto oracle_self = testing::brute_knn_with_self(cloud.positions, 16);
    for (Eigen::Index r = 0; r < 1000; ++r) {
      ASSERT_EQ(row_of(gs, r), oracle_self[static_cast<std::size_t>(r)]);
    }
  }
}

TEST(KnnTest, GridTiesMatchOracle) {
  // Integer lattice: massive distance ties exercise the index tie-break.
  Positions p(6 * 6 * 6, 3);
  Eigen::Index r = 0;
  for (int x = 0; x < 6; ++x)
    for (int y = 0; y < 6; ++y)
      for (int z = 0; z < 6; ++z) p.row(r++) << z, x, y;
  const auto g = knn(build_index(p, 3), 10, SelfPolicy::kExclude);
  const auto oracle = testing::brute_knn(p, p, 10, true);
  for (Eigen::Index i = 0; i < p.rows(); ++i) ASSERT_EQ(row_of(g, i), oracle[static_cast<std::size_t>(i)]);
}

TEST(KnnTest, DeterministicAcrossThreadCounts) {
  const auto cloud = testing::random_cloud(3000, 17);
  const auto tree = build_index(cloud.positions);
  set_max_threads(1);
  const auto a = knn(tree, 16, SelfPolicy::kInclude);
  set_max_threads(8);
  const auto b = knn(tree, 16, SelfPolicy::kInclude);
  set_max_threads(1);
  EXPECT_EQ(a.indices, b.indices);
  EXPECT_EQ(a.distances, b.distances);
}

TEST(KnnTest, DistanceSymmetry) {
  const auto cloud = testing::random_cloud(300, 21);
  const auto g = knn(build_index(cloud.positions), 5, SelfPolicy::kExclude);
  const auto full = knn(build_index(cloud.positions), 299, SelfPolicy::kExclude);
  for (Eigen::Index i = 0; i < 300; i += 17) {
    const auto j = g.indices(i, 0);
    for (int c = 0; c < 299; ++c) {
      if (full.indices(j, c) == i) EXPECT_EQ(full.distances(j, c), g.distances(i, 0));
    }
  }
}

TEST(RadiusTest, SmallRadiusFindsNothing) {
  const auto res = radius_neighbors(build_index(collinear4()), 0.5, SelfPolicy::kExclude);
  for (const auto& row : res.indices) EXPECT_TRUE(row.empty());
}

TEST(RadiusTest, InclusiveBoundary) {
  Positions p(2, 3);
  p << 0, 0, 0, 1, 0, 0;
  const auto res = radius_neighbors(build_index(p), 1.0, SelfPolicy::kExclude);
  EXPECT_EQ(res.indices[0], (std::vector<std::int32_t>{1}));
  EXPECT_EQ(res.indices[1], (std::vector<std::int32_t>{0}));
}

TEST(RadiusTest, NonPositiveRadius) {
  const auto tree = build_index(collinear4());
  EXPECT_THROW(radius_neighbors(tree, 0.0, SelfPolicy::kExclude), ValidationError);
  EXPECT_THROW(radius_neighbors(tree, -1.0, SelfPolicy::kExclude), ValidationError);
}

TEST(RadiusTest, MatchesBruteForceOracle) {
  const auto cloud = testing::random_cloud(500, 31);
  const auto tree = build_index(cloud.positions);
  for (bool exclude : {true, false}) {
    const auto res = radius_neighbors(tree, 0.2, exclude ? SelfPolicy::kExclude : SelfPolicy::kInclude);
    const auto oracle = testing::brute_radius(cloud.positions, 0.2, exclude);
    for (std::size_t i = 0; i < 500; ++i) ASSERT_EQ(res.indices[i], oracle[i]);
  }
}

}  // namespace
}  // namespace urbanseg
