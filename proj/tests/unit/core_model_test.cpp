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

#include <gtest/gtest.h>

#include <limits>
#include <numeric>
#include <random>
#include <ranges>

#include "test_util.hpp"

namespace urbanseg {
namespace {

PointCloud one_point(Label label) {
  PointCloud c;
  c.schema_name = "urban5";
  c.positions = Positions::Zero(1, 3);
  c.labels = Labels{label};
  return c;
}

TEST(ClassSchemaTest, TargetSchemaOrder) {
  const auto& s = urban5_schema();
  ASSERT_EQ(s.class_count(), 5u);
  EXPECT_EQ(s.class_names(),
            (std::vector<std::string>{"Background", "Building", "Vegetation", "Road", "Water"}));
  EXPECT_EQ(s.id_of("Water"), target::kWater);
}

TEST(ClassSchemaTest, RejectsDuplicatesAndEmpty) {
  EXPECT_THROW(ClassSchema("x", {"a", "a"}), ValidationError);
  EXPECT_THROW(ClassSchema("x", {"a", ""}), ValidationError);
  EXPECT_THROW(ClassSchema("x", {}), ValidationError);
}

TEST(ValidateCloudTest, SmallestValidCloud) {
  EXPECT_TRUE(validate_cloud(one_point(0), urban5_schema()).ok());
}

TEST(ValidateCloudTest, LabelOutOfRange) {
  const auto report = validate_cloud(one_point(7), urban5_schema());
  ASSERT_FALSE(report.ok());
  EXPECT_NE(report.violations[0].find("label out of range"), std::string::npos);
}

TEST(ValidateCloudTest, NonFiniteCoordinate) {
  auto c = one_point(0);
  c.positions(0, 1) = std::numeric_limits<double>::quiet_NaN();
  const auto report = validate_cloud(c, urban5_schema());
  ASSERT_FALSE(report.ok());
  EXPECT_NE(report.violations[0].find("non-finite coordinate"), std::string::npos);
}

TEST(ValidateCloudTest, LengthMismatch) {
  auto c = one_point(0);
  c.labels->push_back(1);
  c.colors.emplace(3, 3);
  EXPECT_EQ(validate_cloud(c, urban5_schema()).violations.size(), 2u);
}

TEST(RemapLabelsTest, SensatVegetationMapsToVegetation) {
  PointCloud c = one_point(sensat_urban_schema().id_of("Vegetation"));
  c.schema_name = "sensat_urban";
  const auto out = remap_labels(c, default_sensat_urban_map());
  EXPECT_EQ((*out.labels)[0], target::kVegetation);
  EXPECT_EQ(out.schema_name, "urban5");
}

TEST(RemapLabelsTest, IdentityIsByteIdentical) {
  const auto c = testing::random_cloud(200, 3);
  const auto out = remap_labels(c, ClassMap::identity(urban5_schema()));
  EXPECT_EQ(*out.labels, *c.labels);
  EXPECT_EQ(out.positions, c.positions);
  EXPECT_EQ(*out.colors, *c.colors);
}

TEST(RemapLabelsTest, SensatCloudLandsInTargetRange) {
  const auto c = testing::random_cloud(1000, 11, 1.0, true, 13, "sensat_urban");
  const auto out = remap_labels(c, default_sensat_urban_map());
  ASSERT_EQ(out.size(), 1000);
  // Independent name-level table.
  const std::map<std::string, std::string> table = {
      {"Ground", "Background"},  {"Vegetation", "Vegetation"}, {"Building", "Building"},
      {"Wall", "Building"},      {"Bridge", "Road"},           {"Parking", "Road"},
      {"Rail", "Road"},          {"Traffic Road", "Road"},     {"Street Furniture", "Background"},
      {"Car", "Background"},     {"Footpath", "Road"},         {"Bike", "Background"},
      {"Water", "Water"}};
  for (std::size_t i = 0; i < 1000; ++i) {
    const Label src = (*c.labels)[i];
    const Label dst = (*out.labels)[i];
    ASSERT_LT(dst, 5u);
    EXPECT_EQ(urban5_schema().class_name(dst), table.at(sensat_urban_schema().class_name(src)));
  }
}

TEST(RemapLabelsTest, TorontoDefaults) {
  const auto m = default_toronto3d_map();
  EXPECT_EQ(m(toronto3d_schema().id_of("Natural")), target::kVegetation);
  EXPECT_EQ(m(toronto3d_schema().id_of("Road Markings")), target::kRoad);
  EXPECT_EQ(m(toronto3d_schema().id_of("Unclassified")), target::kBackground);
}

TEST(RemapLabelsTest, Errors) {
  auto c = one_point(0);
  EXPECT_THROW(remap_labels(c, default_sensat_urban_map()), ValidationError);
  c.labels.reset();
  EXPECT_THROW(remap_labels(c, ClassMap::identity(urban5_schema())), ValidationError);
}

TEST(RemapLabelsTest, PropertyRandomMapsPreserveCountAndRange) {
  std::mt19937_64 rng(5);
  const ClassSchema source("src", {"a", "b", "c", "d", "e", "f", "g"});
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Label> table(source.class_count());
    for (auto& t : table) t = static_cast<Label>(rng() % 5);
    const ClassMap map(source, urban5_schema(), table);
    const auto cloud = testing::random_cloud(1 + rng() % 300, rng(), 1.0, false, 7, "src");
    const auto out = remap_labels(cloud, map);
    ASSERT_EQ(out.size(), cloud.size());
    for (Label l : *out.labels) ASSERT_LT(l, 5u);

    // remap-then-histogram equals histogram pushed forward through the map.
    const auto after = class_histogram(out, 5);
    const auto before = class_histogram(cloud, 7);
    std::vector<std::uint64_t> pushed(5, 0);
    for (const auto& [id, count] : before) pushed[table[id]] += count;
    for (Label t = 0; t < 5; ++t) EXPECT_EQ(after.at(t), pushed[t]);
  }
}

TEST(ClassHistogramTest, ChengduArea2GroundTruth) {
  const std::vector<std::uint64_t> counts = {22398111, 9156839, 19363119, 12821506, 4260425};
  std::vector<std::uint64_t> bounds(counts.size());
  std::partial_sum(counts.begin(), counts.end(), bounds.begin());
  const std::uint64_t total = bounds.back();
  // Lazily enumerate a label per point without materializing 68M labels.
  auto labels = std::views::iota(std::uint64_t{0}, total) | std::views::transform([&](std::uint64_t i) {
                  return static_cast<Label>(std::upper_bound(bounds.begin(), bounds.end(), i) -
                                            bounds.begin());
                });
  const auto hist = class_histogram(labels, 5);
  EXPECT_EQ(hist.at(0), 22398111u);
  EXPECT_EQ(hist.at(1), 9156839u);
  EXPECT_EQ(hist.at(2), 19363119u);
  EXPECT_EQ(hist.at(3), 12821506u);
  EXPECT_EQ(hist.at(4), 4260425u);
}

TEST(ClassHistogramTest, EmptyCloudAllZeros) {
  PointCloud c;
  c.labels.emplace();
  const auto hist = class_histogram(c, urban5_schema());
  ASSERT_EQ(hist.size(), 5u);
  for (const auto& [id, n] : hist) EXPECT_EQ(n, 0u);
}

TEST(ClassHistogramTest, DirectCount) {
  PointCloud c;
  c.positions = Positions::Zero(3, 3);
  c.labels = Labels{1, 1, 4};
  const auto hist = class_histogram(c, 5);
  EXPECT_EQ(hist.at(0), 0u);
  EXPECT_EQ(hist.at(1), 2u);
  EXPECT_EQ(hist.at(2), 0u);
  EXPECT_EQ(hist.at(3), 0u);
  EXPECT_EQ(hist.at(4), 1u);
}

TEST(ClassHistogramTest, SumsToN) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto c = testing::random_cloud(50 + seed * 37, seed);
    std::uint64_t sum = 0;
    for (const auto& [id, n] : class_histogram(c, 5)) sum += n;
    EXPECT_EQ(sum, static_cast<std::uint64_t>(c.size()));
  }
}

TEST(ClassMapJsonTest, LoadsByName) {
  const auto m = load_class_map_json(R"({"source": "toronto3d", "target": "urban5",
    "mapping": {"Unclassified": "Background", "Ground": "Road", "Road Markings": "Road",
                "Natural": "Vegetation", "Building": "Building", "Utility Line": "Background",
                "Pole": "Background", "Car": "Background", "Fence": "Water"}})");
  EXPECT_EQ(m(toronto3d_schema().id_of("Fence")), target::kWater);
}

TEST(ClassMapJsonTest, UnknownNameIsError) {
  EXPECT_THROW(load_class_map_json(R"({"source": "urban5", "target": "urban5",
    "mapping": {"Background": "Background", "Building": "Building", "Vegetation": "Vegetation",
                "Road": "Road", "Water": "Lake"}})"),
               ValidationError);
  EXPECT_THROW(load_class_map_json(R"({"source": "nope", "target": "urban5", "mapping": {}})"),
               ValidationError);
}

TEST(ClassMapJsonTest, PartialMapIsError) {
  EXPECT_THROW(load_class_map_json(R"({"source": "urban5", "target": "urban5",
    "mapping": {"Background": "Background"}})"),
               ValidationError);
}

TEST(ClassMapJsonTest, CustomSchema) {
  const auto schema = load_class_schema_json(R"({"name": "mine", "classes": ["x", "y"]})");
  const auto m = load_class_map_json(
      R"({"source": "mine", "target": "urban5", "mapping": {"x": "Road", "y": "Water"}})", {schema});
  EXPECT_EQ(m.mapping(), (std::vector<Label>{3, 4}));
  EXPECT_THROW(load_class_schema_json("{not json"), FormatError);
}

}  // namespace
}  // namespace urbanseg
