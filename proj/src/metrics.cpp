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

#include <cstdio>
#include <sstream>

#include "urbanseg/errors.hpp"

namespace urbanseg {

ConfusionMatrix::ConfusionMatrix(std::size_t class_count)
    : counts_(Counts::Zero(static_cast<Eigen::Index>(class_count), static_cast<Eigen::Index>(class_count))) {}

ConfusionMatrix::ConfusionMatrix(Counts counts) : counts_(std::move(counts)) {
  if (counts_.rows() != counts_.cols()) throw ValidationError("confusion matrix must be square");
}

std::uint64_t ConfusionMatrix::at(Label truth, Label predicted) const {
  if (truth >= class_count() || predicted >= class_count()) throw ValidationError("confusion matrix index out of range");
  return counts_(truth, predicted);
}

std::uint64_t ConfusionMatrix::total() const { return counts_.sum(); }

void ConfusionMatrix::add(Label truth, Label predicted, std::uint64_t n) {
  if (truth >= class_count()) {
    throw ValidationError("true label " + std::to_string(truth) + " out of range for " +
                          std::to_string(class_count()) + " classes");
  }
  if (predicted >= class_count()) {
    throw ValidationError("predicted label " + std::to_string(predicted) + " out of range for " +
                          std::to_string(class_count()) + " classes");
  }
  counts_(truth, predicted) += n;
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.class_count() != class_count()) throw ValidationError("cannot merge confusion matrices of different sizes");
  counts_ += other.counts_;
}

std::uint64_t ConfusionMatrix::tp(Label c) const { return at(c, c); }
std::uint64_t ConfusionMatrix::fp(Label c) const { return counts_.col(c).sum() - at(c, c); }
std::uint64_t ConfusionMatrix::fn(Label c) const { return counts_.row(c).sum() - at(c, c); }
std::uint64_t ConfusionMatrix::tn(Label c) const { return total() - tp(c) - fp(c) - fn(c); }

void accumulate(ConfusionMatrix& cm, std::span<const Label> truth, std::span<const Label> predicted) {
  if (truth.size() != predicted.size()) {
    throw ValidationError("length mismatch: " + std::to_string(truth.size()) + " true labels vs " +
                          std::to_string(predicted.size()) + " predicted labels");
  }
  // Validate first so a bad label leaves the matrix untouched.
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] >= cm.class_count() || predicted[i] >= cm.class_count()) {
      throw ValidationError("label out of range at point " + std::to_string(i));
    }
  }
  for (std::size_t i = 0; i < truth.size(); ++i) cm.add(truth[i], predicted[i]);
}

namespace {

std::optional<double> ratio(std::uint64_t num, std::uint64_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

std::optional<double> mean_of(const std::vector<ClassMetrics>& per_class, std::optional<double> ClassMetrics::*field) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& m : per_class) {
    if (m.*field) {
      sum += *(m.*field);
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

}  // namespace

MetricsReport compute_report(const ConfusionMatrix& cm, const ClassSchema& schema) {
  const std::uint64_t total = cm.total();
  if (total == 0) throw ValidationError("cannot compute metrics from an empty confusion matrix");
  if (schema.class_count() != 0 && schema.class_count() != cm.class_count()) {
    throw ValidationError("schema class count differs from confusion matrix size");
  }
  MetricsReport r;
  r.total = total;
  r.overall_accuracy = static_cast<double>(cm.counts().trace()) / static_cast<double>(total);
  for (Label c = 0; c < cm.class_count(); ++c) {
    r.class_names.push_back(schema.class_count() ? schema.class_name(c) : "class_" + std::to_string(c));
    const auto tp = cm.tp(c), fp = cm.fp(c), fn = cm.fn(c), tn = cm.tn(c);
    ClassMetrics m;
    // A class absent from truth and prediction has no defined metrics at all.
    if (tp + fp + fn > 0) {
      m.iou = ratio(tp, tp + fp + fn);
      m.accuracy = ratio(tp + tn, total);
      m.precision = ratio(tp, tp + fp);
      m.recall = ratio(tp, tp + fn);
      m.f1 = ratio(2 * tp, 2 * tp + fp + fn);
    }
    r.per_class.push_back(m);
  }
  r.mean_iou = mean_of(r.per_class, &ClassMetrics::iou);
  r.mean_f1 = mean_of(r.per_class, &ClassMetrics::f1);
  r.mean_accuracy = mean_of(r.per_class, &ClassMetrics::accuracy);
  return r;
}

double f1_from_iou(double iou) {
  if (!(iou >= 0.0 && iou <= 1.0)) throw ValidationError("IoU must lie in [0, 1]");
  return 2.0 * iou / (1.0 + iou);
}

namespace {

nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json("undefined"); }

}  // namespace

nlohmann::json report_to_json(const MetricsReport& report) {
  nlohmann::json classes = nlohmann::json::array();
  for (std::size_t c = 0; c < report.per_class.size(); ++c) {
    const auto& m = report.per_class[c];
    classes.push_back({{"id", c},
                       {"name", report.class_names[c]},
                       {"iou", opt(m.iou)},
                       {"accuracy", opt(m.accuracy)},
                       {"precision", opt(m.precision)},
                       {"recall", opt(m.recall)},
                       {"f1", opt(m.f1)}});
  }
  return {{"total_points", report.total},
          {"overall_accuracy", report.overall_accuracy},
          {"mean_iou", opt(report.mean_iou)},
          {"mean_f1", opt(report.mean_f1)},
          {"mean_accuracy", opt(report.mean_accuracy)},
          {"classes", classes}};
}

std::string report_to_table(const MetricsReport& report) {
  std::size_t width = 5;
  for (const auto& n : report.class_names) width = std::max(width, n.size());
  auto cell = [](const std::optional<double>& v) {
    if (!v) return std::string("     -");
    char buf[16];
    std::snprintf(buf, sizeof buf, "%6.2f", *v);
    return std::string(buf);
  };
  std::ostringstream os;
  os << std::string(width, ' ') << "    Acc    IoU     F1\n";
  for (std::size_t c = 0; c < report.per_class.size(); ++c) {
    const auto& m = report.per_class[c];
    os << report.class_names[c] << std::string(width - report.class_names[c].size(), ' ') << " " << cell(m.accuracy)
       << " " << cell(m.iou) << " " << cell(m.f1) << "\n";
  }
  os << std::string(width, '-') << "---------------------\n";
  os << "Mean" << std::string(width - 4, ' ') << " " << cell(report.mean_accuracy) << " " << cell(report.mean_iou)
     << " " << cell(report.mean_f1) << "\n";
  char buf[64];
  std::snprintf(buf, sizeof buf, "Overall accuracy %.4f over %llu points\n", report.overall_accuracy,
                static_cast<unsigned long long>(report.total));
  os << buf;
  return os.str();
}

}  // namespace urbanseg
