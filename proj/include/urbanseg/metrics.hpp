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
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "urbanseg/core_model.hpp"

namespace urbanseg {

// counts(t, p): points of true class t predicted as p.
class ConfusionMatrix {
 public:
  using Counts = Eigen::Matrix<std::uint64_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::size_t class_count);
  explicit ConfusionMatrix(Counts counts);

  std::size_t class_count() const { return static_cast<std::size_t>(counts_.rows()); }
  const Counts& counts() const { return counts_; }
  std::uint64_t at(Label truth, Label predicted) const;
  std::uint64_t total() const;

  void add(Label truth, Label predicted, std::uint64_t n = 1);
  // Entrywise sum.
  void merge(const ConfusionMatrix& other);

  std::uint64_t tp(Label c) const;
  std::uint64_t fp(Label c) const;
  std::uint64_t fn(Label c) const;
  std::uint64_t tn(Label c) const;

  friend bool operator==(const ConfusionMatrix& a, const ConfusionMatrix& b) { return a.counts_ == b.counts_; }

 private:
  Counts counts_;
};

void accumulate(ConfusionMatrix& cm, std::span<const Label> truth, std::span<const Label> predicted);

// Absent metrics are undefined (0/0).
struct ClassMetrics {
  std::optional<double> iou;
  std::optional<double> accuracy;  // (TP + TN) / total
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;
};

struct MetricsReport {
  std::vector<std::string> class_names;
  std::vector<ClassMetrics> per_class;
  std::uint64_t total = 0;
  double overall_accuracy = 0.0;
  // Means over classes whose value is defined.
  std::optional<double> mean_iou;
  std::optional<double> mean_f1;
  std::optional<double> mean_accuracy;
};

// Class names default to "class_<id>" when `schema` is empty.
MetricsReport compute_report(const ConfusionMatrix& cm, const ClassSchema& schema = {});

// F1 implied by an IoU: 2 IoU / (1 + IoU).
double f1_from_iou(double iou);

nlohmann::json report_to_json(const MetricsReport& report);
// Aligned Acc / IoU / F1 table, "-" for undefined.
std::string report_to_table(const MetricsReport& report);

}  // namespace urbanseg
