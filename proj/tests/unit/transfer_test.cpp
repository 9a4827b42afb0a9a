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

#include "urbanseg/transfer.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>

#include "urbanseg/errors.hpp"

namespace urbanseg {
namespace {

LayerConfig small_config() {
  LayerConfig c;
  c.k = 4;
  c.num_layers = 2;
  c.feature_dims = {8, 16};
  c.head_dim = 8;
  return c;
}

ModelParams source_model(std::uint64_t seed = 3) {
  LayerConfig c = small_config();
  c.num_classes = static_cast<int>(synthetic_source_schema().class_count());
  auto p = init_model(c, synthetic_source_schema(), seed);
  p.provenance = {{"note", "source"}, {"value", 0.1}};
  return p;
}

bool bitwise_equal(const Mat<float>& a, const Mat<float>& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(float) * static_cast<std::size_t>(a.size())) == 0;
}

Correspondence vegetation_only() {
  return {{urban5_schema().id_of("Vegetation"), synthetic_source_schema().id_of("Vegetation")}};
}

TEST(CheckpointTest, RoundTripIsBitwise) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto p = source_model(seed);
    const auto bytes = serialize_checkpoint(p);
    EXPECT_EQ(bytes.substr(0, 4), "PCSK");
    const auto q = parse_checkpoint(bytes);
    EXPECT_EQ(q.config, p.config);
    EXPECT_EQ(q.schema.class_names(), p.schema.class_names());
    EXPECT_EQ(q.provenance, p.provenance);
    ASSERT_EQ(q.tensors.size(), p.tensors.size());
    for (const auto& [name, t] : p.tensors) EXPECT_TRUE(bitwise_equal(t, q.tensors.at(name))) << name;
    EXPECT_EQ(serialize_checkpoint(q), bytes);
  }
}

TEST(CheckpointTest, FileRoundTrip) {
  const auto path = (std::filesystem::temp_directory_path() / "urbanseg_ckpt_test.pcsk").string();
  const auto p = source_model();
  save_checkpoint(p, path);
  EXPECT_EQ(serialize_checkpoint(load_checkpoint(path)), serialize_checkpoint(p));
  std::filesystem::remove(path);
}

TEST(CheckpointTest, EveryTruncationFails) {
  const auto bytes = serialize_checkpoint(source_model());
  for (std::size_t n = 0; n < bytes.size(); n += 1 + n / 16) {
    EXPECT_THROW(parse_checkpoint(std::string_view(bytes).substr(0, n)), FormatError) << n;
  }
  EXPECT_THROW(parse_checkpoint(bytes + "x"), FormatError);
}

TEST(CheckpointTest, BadMagicAndVersion) {
  auto bytes = serialize_checkpoint(source_model());
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(parse_checkpoint(bad), FormatError);
  bad = bytes;
  bad[4] = 9;
  EXPECT_THROW(parse_checkpoint(bad), FormatError);
}

TEST(CheckpointTest, HeadInconsistentWithSchema) {
  auto p = source_model();
  // Claim five classes while the classifier still has eight columns.
  p.schema = urban5_schema();
  EXPECT_THROW(serialize_checkpoint(p), ValidationError);
  // Build the same inconsistency at the byte level.
  auto good = source_model();
  auto other = good;
  other.config.num_classes = 5;
  other.schema = urban5_schema();
  other.tensors = init_model(other.config, other.schema, 1).tensors;
  const auto a = serialize_checkpoint(good);
  const auto b = serialize_checkpoint(other);
  // Metadata from `other`, tensors from `good`.
  const auto meta_end = [](const std::string& s) {
    std::uint32_t len;
    std::memcpy(&len, s.data() + 8, 4);
    return 12 + static_cast<std::size_t>(len);
  };
  const auto spliced = b.substr(0, meta_end(b)) + a.substr(meta_end(a));
  EXPECT_THROW(parse_checkpoint(spliced), FormatError);
}

TEST(TransferTest, BackboneCopiedHeadRebuilt) {
  const auto src = source_model();
  const auto dst = init_from_source(src, urban5_schema(), vegetation_only(), 11);
  EXPECT_EQ(dst.config.num_classes, 5);
  EXPECT_EQ(dst.schema.name(), urban5_schema().name());
  for (const auto& [name, t] : src.tensors) {
    if (is_head_tensor(name)) continue;
    EXPECT_TRUE(bitwise_equal(t, dst.tensors.at(name))) << name;
  }
  const auto& w = dst.tensors.at(kClassifierWeight);
  const auto& b = dst.tensors.at(kClassifierBias);
  EXPECT_EQ(w.cols(), 5);
  const auto& sw = src.tensors.at(kClassifierWeight);
  EXPECT_TRUE(bitwise_equal(w.col(2), sw.col(1)));
  EXPECT_EQ(b(0, 2), src.tensors.at(kClassifierBias)(0, 1));
  const double bound = std::sqrt(6.0 / static_cast<double>(w.rows()));
  for (int c : {0, 1, 3, 4}) {
    EXPECT_LE(w.col(c).cwiseAbs().maxCoeff(), bound);
    EXPECT_GT(w.col(c).cwiseAbs().maxCoeff(), 0.0f);
    EXPECT_EQ(b(0, c), 0.0f);
  }
  EXPECT_NO_THROW(check_params(dst));
}

TEST(TransferTest, SeedDeterminism) {
  const auto src = source_model();
  const auto a = init_from_source(src, urban5_schema(), vegetation_only(), 5);
  const auto b = init_from_source(src, urban5_schema(), vegetation_only(), 5);
  const auto c = init_from_source(src, urban5_schema(), vegetation_only(), 6);
  EXPECT_EQ(serialize_checkpoint(a), serialize_checkpoint(b));
  EXPECT_FALSE(bitwise_equal(a.tensors.at(kClassifierWeight), c.tensors.at(kClassifierWeight)));
}

TEST(TransferTest, BackboneMismatch) {
  const auto src = source_model();
  LayerConfig other = small_config();
  other.feature_dims = {8, 32};
  EXPECT_THROW(init_from_source(src, other, urban5_schema(), {}, 1), ValidationError);
  EXPECT_NO_THROW(init_from_source(src, small_config(), urban5_schema(), {}, 1));
}

TEST(TransferTest, CorrespondenceJson) {
  const auto m = load_correspondence_json(R"({"Vegetation": "Vegetation", "Road": "Road"})", urban5_schema(),
                                          synthetic_source_schema());
  EXPECT_EQ(m.at(2), 1);
  EXPECT_EQ(m.at(3), 4);
  EXPECT_THROW(load_correspondence_json(R"({"Sky": "Vegetation"})", urban5_schema(), synthetic_source_schema()),
               ValidationError);
  EXPECT_THROW(load_correspondence_json(R"(["x"])", urban5_schema(), synthetic_source_schema()),
               ValidationError);
  EXPECT_THROW(load_correspondence_json("{", urban5_schema(), synthetic_source_schema()), FormatError);
}

TEST(TransferTest, BadCorrespondenceIds) {
  const auto src = source_model();
  EXPECT_THROW(init_from_source(src, urban5_schema(), {{7, 0}}, 1), ValidationError);
  EXPECT_THROW(init_from_source(src, urban5_schema(), {{0, 8}}, 1), ValidationError);
}

}  // namespace
}  // namespace urbanseg
