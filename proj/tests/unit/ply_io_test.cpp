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

#include "urbanseg/ply_io.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <random>
#include <sstream>

#include "urbanseg/file_io.hpp"
#include "test_util.hpp"

namespace urbanseg {
namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("urbanseg_ply_" + name)).string();
}

void expect_clouds_equal(const PointCloud& a, const PointCloud& b) {
  ASSERT_EQ(a.size(), b.size());
  EXPECT_EQ(a.positions, b.positions);
  ASSERT_EQ(a.has_colors(), b.has_colors());
  if (a.colors) EXPECT_EQ(*a.colors, *b.colors);
  ASSERT_EQ(a.has_labels(), b.has_labels());
  if (a.labels) EXPECT_EQ(*a.labels, *b.labels);
  EXPECT_EQ(a.schema_name, b.schema_name);
}

TEST(ReadPlyTest, AsciiSingleVertex) {
  const std::string ply =
      "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\n"
      "property float z\nend_header\n0 0 0\n";
  const auto c = read_ply(ply);
  ASSERT_EQ(c.size(), 1);
  EXPECT_EQ(c.positions.row(0), Eigen::RowVector3d::Zero());
  EXPECT_FALSE(c.has_colors());
  EXPECT_FALSE(c.has_labels());
}

TEST(ReadPlyTest, TruncatedBody) {
  std::string ply =
      "ply\nformat ascii 1.0\nelement vertex 10\nproperty double x\nproperty double y\n"
      "property double z\nend_header\n";
  for (int i = 0; i < 9; ++i) ply += "1 2 3\n";
  EXPECT_THROW(read_ply(ply), FormatError);

  auto cloud = testing::random_cloud(10, 1);
  auto bin = write_ply(cloud, PlyFormat::kBinaryLittleEndian);
  bin.resize(bin.size() - 5);
  EXPECT_THROW(read_ply(bin), FormatError);
}

TEST(ReadPlyTest, HeaderErrors) {
  EXPECT_THROW(read_ply("plx\n"), FormatError);
  EXPECT_THROW(read_ply("ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nend_header\n1\n"),
               FormatError);
  EXPECT_THROW(read_ply("ply\nformat binary_big_endian 1.0\nelement vertex 0\nproperty float x\n"
                        "property float y\nproperty float z\nend_header\n"),
               FormatError);
  EXPECT_THROW(read_ply("ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\n"
                        "property float x\nend_header\n"),
               FormatError);
  EXPECT_THROW(read_ply("ply\nformat ascii 1.0\nelement vertex 1\n"), FormatError);
}

TEST(ReadPlyTest, ForeignLayoutWithFacesAndFloatLabel) {
  // CloudCompare-style export: float label, extra properties, a face element.
  const std::string ply =
      "ply\nformat ascii 1.0\ncomment made elsewhere\nelement vertex 2\n"
      "property float x\nproperty float y\nproperty float z\nproperty float intensity\n"
      "property uchar red\nproperty uchar green\nproperty uchar blue\n"
      "property float scalar_Label\nelement face 1\nproperty list uchar int vertex_indices\n"
      "end_header\n1.5 2 3 0.25 10 20 30 3\n4 5 6 0.5 40 50 60 1\n3 0 1 1\n";
  const auto c = read_ply(ply);
  ASSERT_EQ(c.size(), 2);
  EXPECT_DOUBLE_EQ(c.positions(0, 0), 1.5);
  EXPECT_EQ((*c.colors)(1, 2), 60);
  EXPECT_EQ(*c.labels, (Labels{3, 1}));
}

TEST(ReadPlyTest, LabelPropertySearchOrderIsConfigurable) {
  const std::string ply =
      "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\n"
      "property float z\nproperty uchar label\nproperty uchar class\nend_header\n0 0 0 2 4\n";
  EXPECT_EQ((*read_ply(ply).labels)[0], 4u);
  PlyReadOptions opts;
  opts.label_properties = {"label"};
  EXPECT_EQ((*read_ply(ply, opts).labels)[0], 2u);
  opts.label_properties = {"nothing"};
  EXPECT_FALSE(read_ply(ply, opts).has_labels());
}

TEST(WritePlyTest, EmptyCloud) {
  PointCloud empty;
  for (auto fmt : {PlyFormat::kAscii, PlyFormat::kBinaryLittleEndian}) {
    const auto bytes = write_ply(empty, fmt);
    EXPECT_NE(bytes.find("element vertex 0\n"), std::string::npos);
    EXPECT_EQ(read_ply(bytes).size(), 0);
  }
}

TEST(WritePlyTest, TwoRecordLayout) {
  auto c = testing::random_cloud(2, 9);
  const auto ascii = write_ply(c, PlyFormat::kAscii);
  const auto body = ascii.substr(ascii.find("end_header\n") + 11);
  std::istringstream lines(body);
  std::string line;
  int records = 0;
  while (std::getline(lines, line)) {
    std::istringstream fields(line);
    std::string tok;
    int count = 0;
    while (fields >> tok) ++count;
    EXPECT_EQ(count, 7);  // x y z r g b class
    ++records;
  }
  EXPECT_EQ(records, 2);

  const auto bin = write_ply(c, PlyFormat::kBinaryLittleEndian);
  std::size_t header_size = 0;
  parse_ply_header(bin, &header_size);
  EXPECT_EQ(bin.size() - header_size, 2u * (3 * 8 + 3 + 1));
}

TEST(WritePlyTest, RejectsWideLabels) {
  auto c = testing::random_cloud(2, 9);
  (*c.labels)[0] = 300;
  EXPECT_THROW(write_ply(c, PlyFormat::kAscii), ValidationError);
}

TEST(WritePlyTest, BinaryRoundTripTenThousandPoints) {
  const auto c = testing::random_cloud(10000, 77, 1000.0);
  const auto back = read_ply(write_ply(c, PlyFormat::kBinaryLittleEndian));
  expect_clouds_equal(c, back);
  EXPECT_EQ((c.positions - back.positions).cwiseAbs().maxCoeff(), 0.0);
}

TEST(WritePlyTest, PropertyRoundTripBothFormatsAgree) {
  std::mt19937_64 rng(123);
  for (int trial = 0; trial < 20; ++trial) {
    auto c = testing::random_cloud(rng() % 200, rng(), 1e4 * (trial + 1));
    if (trial % 3 == 1) c.colors.reset();
    if (trial % 4 == 2) c.labels.reset();
    const auto from_bin = read_ply(write_ply(c, PlyFormat::kBinaryLittleEndian));
    const auto from_ascii = read_ply(write_ply(c, PlyFormat::kAscii));
    expect_clouds_equal(c, from_bin);
    expect_clouds_equal(c, from_ascii);
  }
}

TEST(WritePlyTest, FileRoundTrip) {
  const auto c = testing::random_cloud(100, 4);
  const auto path = temp_path("file.ply");
  write_ply_file(c, path, PlyFormat::kBinaryLittleEndian);
  expect_clouds_equal(c, read_ply_file(path));
  std::filesystem::remove(path);
  EXPECT_THROW(read_ply_file(path), IoError);
}

NeighborGraph small_graph() {
  NeighborGraph g;
  g.k = 2;
  g.indices.resize(4, 2);
  g.indices << 1, 2, 0, 2, 1, 3, 2, 1;
  g.distances.resize(4, 2);
  g.distances << 1, 2, 1, 1, 1, 1, 1, 2;
  return g;
}

TEST(ArrayBundleTest, SmallGraphRoundTrip) {
  const auto path = temp_path("small.pcb");
  const auto g = small_graph();
  FeatureMatrix f = FeatureMatrix::Random(4, 3);
  write_array_bundle(g, f, path);
  const auto back = read_array_bundle(path);
  EXPECT_EQ(back.graph.k, 2);
  EXPECT_EQ(back.graph.indices, g.indices);
  EXPECT_EQ(back.graph.distances, g.distances);
  EXPECT_EQ(back.features, f);
  std::filesystem::remove(path);
}

TEST(ArrayBundleTest, ShapeMismatch) {
  EXPECT_THROW(write_array_bundle(small_graph(), FeatureMatrix::Zero(3, 2), temp_path("bad.pcb")),
               ValidationError);
}

TEST(ArrayBundleTest, WrongMagic) {
  ArrayBundle b;
  std::vector<float> v{1, 2, 3};
  b.add<float>("v", {3}, v);
  auto bytes = b.serialize();
  bytes[3] = '2';
  EXPECT_THROW(ArrayBundle::parse(bytes), FormatError);
  bytes = b.serialize();
  bytes[4] = 9;  // version
  EXPECT_THROW(ArrayBundle::parse(bytes), FormatError);
  bytes = b.serialize();
  bytes.pop_back();
  EXPECT_THROW(ArrayBundle::parse(bytes), FormatError);
}

TEST(ArrayBundleTest, HeaderLayoutIsExact) {
  ArrayBundle b;
  std::vector<std::int32_t> v{7, -1};
  b.add<std::int32_t>("ab", {1, 2}, v);
  const auto bytes = b.serialize();
  const std::string expected = std::string("PCB1") + std::string("\x01\0\0\0", 4) +
                               std::string("\x01\0\0\0", 4) + std::string("\x02\0\0\0", 4) + "ab" +
                               std::string("\x02", 1) + std::string("\x02\0\0\0", 4) +
                               std::string("\x01\0\0\0\0\0\0\0", 8) +
                               std::string("\x02\0\0\0\0\0\0\0", 8) +
                               std::string("\x07\0\0\0", 4) + std::string("\xff\xff\xff\xff", 4);
  EXPECT_EQ(bytes, expected);
}

TEST(ArrayBundleTest, LargeBundleHashStable) {
  std::mt19937_64 rng(8);
  NeighborGraph g;
  g.k = 16;
  g.indices.resize(10000, 16);
  g.distances.resize(10000, 16);
  for (Eigen::Index i = 0; i < g.indices.size(); ++i) {
    g.indices.data()[i] = static_cast<std::int32_t>(rng() % 10000);
    g.distances.data()[i] = std::ldexp(static_cast<double>(rng()), -64);
  }
  FeatureMatrix f(10000, 8);
  for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = static_cast<float>(rng() % 1000) / 7.0f;

  const auto path = temp_path("large.pcb");
  write_array_bundle(g, f, path);
  const std::string first = read_file(path);
  const auto back = read_array_bundle(path);
  write_array_bundle(back.graph, back.features, path);
  EXPECT_EQ(sha256_hex(first), sha256_hex(read_file(path)));
  EXPECT_EQ(back.graph.indices, g.indices);
  EXPECT_EQ(back.graph.distances, g.distances);
  std::filesystem::remove(path);
}

TEST(ArrayBundleTest, CloudRoundTrip) {
  for (bool colors : {true, false}) {
    auto c = testing::random_cloud(50, 4, 10.0, colors);
    const auto bytes = cloud_to_bundle(c).serialize();
    const auto back = cloud_from_bundle(ArrayBundle::parse(bytes));
    EXPECT_EQ(back.positions, c.positions);
    EXPECT_EQ(back.colors.has_value(), colors);
    EXPECT_EQ(*back.labels, *c.labels);
    EXPECT_EQ(back.schema_name, c.schema_name);
    EXPECT_EQ(cloud_to_bundle(back).serialize(), bytes);
  }
}

}  // namespace
}  // namespace urbanseg
