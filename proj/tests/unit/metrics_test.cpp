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

#include "urbanseg/metrics.hpp"

#include <gtest/gtest.h>

#include <numeric>
#include <random>

#include "../common/published_results.hpp"

namespace urbanseg {
namespace {

ConfusionMatrix random_matrix(std::size_t classes, std::uint64_t seed, int zero_rows = 0) {
  std::mt19937_64 rng(seed);
  ConfusionMatrix::Counts c(static_cast<Eigen::Index>(classes), static_cast<Eigen::Index>(classes));
  for (Eigen::Index i = 0; i < c.size(); ++i) c.data()[i] = rng() % 50 + (i % 3 == 0 ? 1 : 0);
  for (int z = 0; z < zero_rows; ++z) {
    c.row(z).setZero();
    c.col(z).setZero();
  }
  return ConfusionMatrix(c);
}

TEST(ConfusionMatrixTest, PerfectIsDiagonal) {
  ConfusionMatrix cm(5);
  const std::vector<Label> y{0, 1, 2, 3, 4, 4, 2};
  accumulate(cm, y, y);
  for (Label t = 0; t < 5; ++t)
    for (Label p = 0; p < 5; ++p) EXPECT_EQ(cm.at(t, p) > 0, t == p && (t == 0 || t == 1 || t == 2 || t == 3 || t == 4));
  EXPECT_EQ(cm.total(), 7u);
  EXPECT_EQ(cm.counts().trace(), 7u);
}

TEST(ConfusionMatrixTest, OrderAndSplitsDoNotMatter) {
  std::mt19937_64 rng(1);
  std::vector<Label> t(1000), p(1000);
  for (auto& v : t) v = static_cast<Label>(rng() % 5);
  for (auto& v : p) v = static_cast<Label>(rng() % 5);
  ConfusionMatrix whole(5), ab(5), ba(5);
  accumulate(whole, t, p);
  const std::span<const Label> ts(t), ps(p);
  accumulate(ab, ts.first(300), ps.first(300));
  accumulate(ab, ts.subspan(300), ps.subspan(300));
  accumulate(ba, ts.subspan(300), ps.subspan(300));
  accumulate(ba, ts.first(300), ps.first(300));
  EXPECT_EQ(whole, ab);
  EXPECT_EQ(whole, ba);
  ConfusionMatrix m1(5), m2(5);
  accumulate(m1, ts.first(123), ps.first(123));
  accumulate(m2, ts.subspan(123), ps.subspan(123));
  m1.merge(m2);
  EXPECT_EQ(whole, m1);
}

TEST(ConfusionMatrixTest, Errors) {
  ConfusionMatrix cm(3);
  const std::vector<Label> a{0, 1}, b{0}, bad{0, 3};
  EXPECT_THROW(accumulate(cm, a, b), ValidationError);
  try {
    accumulate(cm, a, b);
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("length mismatch"), std::string::npos);
  }
  EXPECT_THROW(accumulate(cm, a, bad), ValidationError);
  EXPECT_EQ(cm.total(), 0u);
  EXPECT_THROW(compute_report(cm), ValidationError);
  EXPECT_THROW(cm.merge(ConfusionMatrix(4)), ValidationError);
}

TEST(ReportTest, TwoClassSubstitution) {
  ConfusionMatrix::Counts c(2, 2);
  c << 4, 1, 1, 4;
  const auto r = compute_report(ConfusionMatrix(c));
  EXPECT_NEAR(*r.per_class[0].iou, 4.0 / 6.0, 1e-15);
  EXPECT_NEAR(*r.per_class[0].accuracy, 0.8, 1e-15);
  EXPECT_NEAR(*r.per_class[0].f1, 0.8, 1e-15);
  EXPECT_NEAR(r.overall_accuracy, 0.8, 1e-15);
}

TEST(ReportTest, PublishedBackgroundPair) {
  // IoU 0.90 implies F1 0.947, published as 0.95.
  EXPECT_NEAR(f1_from_iou(0.90), 2 * 0.90 / 1.90, 1e-15);
  EXPECT_NEAR(f1_from_iou(0.90), 0.947, 5e-4);
  const auto& pair = testing::kPublishedPairs[0];
  ASSERT_EQ(pair.class_name, "Background");
  EXPECT_LE(std::abs(f1_from_iou(pair.iou) - pair.f1), 0.005);
}

TEST(ReportTest, AllCorrect) {
  ConfusionMatrix::Counts c = ConfusionMatrix::Counts::Zero(5, 5);
  c.diagonal() << 10, 3, 7, 1, 9;
  const auto r = compute_report(ConfusionMatrix(c));
  for (const auto& m : r.per_class) {
    EXPECT_EQ(*m.iou, 1.0);
    EXPECT_EQ(*m.f1, 1.0);
    EXPECT_EQ(*m.accuracy, 1.0);
    EXPECT_EQ(*m.precision, 1.0);
    EXPECT_EQ(*m.recall, 1.0);
  }
  EXPECT_EQ(*r.mean_iou, 1.0);
}

TEST(ReportTest, AbsentClassIsUndefinedAndExcluded) {
  ConfusionMatrix::Counts c = ConfusionMatrix::Counts::Zero(5, 5);
  c(0, 0) = 8;
  c(0, 1) = 2;
  c(1, 1) = 5;
  c(2, 2) = 5;
  c(3, 3) = 5;
  const auto r = compute_report(ConfusionMatrix(c), urban5_schema());
  EXPECT_FALSE(r.per_class[4].iou);
  EXPECT_FALSE(r.per_class[4].f1);
  EXPECT_FALSE(r.per_class[4].accuracy);
  const double mean = (*r.per_class[0].iou + *r.per_class[1].iou + 1.0 + 1.0) / 4;
  EXPECT_NEAR(*r.mean_iou, mean, 1e-15);
  const auto j = report_to_json(r);
  EXPECT_EQ(j["classes"][4]["iou"], "undefined");
  EXPECT_EQ(j["classes"][4]["name"], "Water");
  const std::string table = report_to_table(r);
  EXPECT_NE(table.find("Water"), std::string::npos);
  EXPECT_NE(table.find("     -"), std::string::npos);
}

TEST(ReportTest, NeverPredictedButPresent) {
  ConfusionMatrix::Counts c = ConfusionMatrix::Counts::Zero(2, 2);
  c(0, 0) = 3;
  c(1, 0) = 2;
  const auto r = compute_report(ConfusionMatrix(c));
  EXPECT_EQ(*r.per_class[1].iou, 0.0);
  EXPECT_EQ(*r.per_class[1].f1, 0.0);
  EXPECT_FALSE(r.per_class[1].precision);
  EXPECT_EQ(*r.per_class[1].recall, 0.0);
}

TEST(ReportTest, F1IouIdentityOnRandomMatrices) {
  for (std::uint64_t s = 0; s < 200; ++s) {
    const auto r = compute_report(random_matrix(2 + s % 7, s, static_cast<int>(s % 2)));
    for (const auto& m : r.per_class) {
      if (!m.iou) continue;
      EXPECT_NEAR(*m.f1, 2 * *m.iou / (1 + *m.iou), 1e-12);
      if (m.precision && m.recall && *m.precision + *m.recall > 0) {
        EXPECT_NEAR(*m.f1, 2 * *m.precision * *m.recall / (*m.precision + *m.recall), 1e-12);
      }
      for (double v : {*m.iou, *m.f1, *m.accuracy}) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
      }
    }
  }
}

TEST(ReportTest, PermutationEquivariance) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto cm = random_matrix(5, s, s % 3 == 0 ? 1 : 0);
    std::vector<int> perm(5);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), std::mt19937_64(s));
    ConfusionMatrix::Counts c(5, 5);
    for (int t = 0; t < 5; ++t)
      for (int p = 0; p < 5; ++p) c(perm[t], perm[p]) = cm.counts()(t, p);
    const auto a = compute_report(cm);
    const auto b = compute_report(ConfusionMatrix(c));
    for (int k = 0; k < 5; ++k) {
      EXPECT_EQ(a.per_class[k].iou, b.per_class[perm[k]].iou);
      EXPECT_EQ(a.per_class[k].f1, b.per_class[perm[k]].f1);
      EXPECT_EQ(a.per_class[k].accuracy, b.per_class[perm[k]].accuracy);
    }
    EXPECT_NEAR(*a.mean_iou, *b.mean_iou, 1e-15);
  }
}

TEST(ReportTest, TnBookkeeping) {
  const auto cm = random_matrix(4, 9);
  for (Label c = 0; c < 4; ++c) EXPECT_EQ(cm.tp(c) + cm.fp(c) + cm.fn(c) + cm.tn(c), cm.total());
}

}  // namespace
}  // namespace urbanseg
