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

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "urbanseg/core_model.hpp"
#include "urbanseg/network.hpp"
#include "urbanseg/preprocess.hpp"
#include "urbanseg/tape.hpp"

namespace urbanseg {

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename Scalar>
struct AdamState {
  ParamTable<Scalar> m;
  ParamTable<Scalar> v;
  std::int64_t t = 0;
};

// One bias-corrected Adam update for every tensor named in `grads`.
template <typename Scalar>
void adam_step(ParamTable<Scalar>& params, const ParamTable<Scalar>& grads, AdamState<Scalar>& state,
               const AdamConfig& cfg) {
  for (const auto& [name, g] : grads) {
    auto p = params.find(name);
    if (p == params.end()) throw ValidationError("adam: gradient for unknown tensor '" + name + "'");
    if (p->second.rows() != g.rows() || p->second.cols() != g.cols()) {
      throw ValidationError("adam: gradient shape differs from tensor '" + name + "'");
    }
  }
  ++state.t;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  const auto b1 = static_cast<Scalar>(cfg.beta1);
  const auto b2 = static_cast<Scalar>(cfg.beta2);
  for (const auto& [name, g] : grads) {
    Mat<Scalar>& p = params.at(name);
    auto [mi, m_new] = state.m.try_emplace(name, Mat<Scalar>::Zero(g.rows(), g.cols()));
    auto [vi, v_new] = state.v.try_emplace(name, Mat<Scalar>::Zero(g.rows(), g.cols()));
    Mat<Scalar>& m = mi->second;
    Mat<Scalar>& v = vi->second;
    m = b1 * m + (Scalar(1) - b1) * g;
    v = b2 * v + (Scalar(1) - b2) * g.cwiseProduct(g);
    const auto mhat = (m.array() / static_cast<Scalar>(c1));
    const auto vhat = (v.array() / static_cast<Scalar>(c2));
    p.array() -= static_cast<Scalar>(cfg.lr) * mhat / (vhat.sqrt() + static_cast<Scalar>(cfg.eps));
  }
}

template <typename Scalar>
struct LossResult {
  Scalar value = 0;
  Mat<Scalar> grad;  // d loss / d logits
};

// Mean class-weighted cross-entropy and its gradient w.r.t. the logits.
template <typename Scalar>
LossResult<Scalar> weighted_cross_entropy(const Mat<Scalar>& logits, const std::vector<Label>& labels,
                                          const std::vector<Scalar>& class_weights) {
  Tape<Scalar> tape;
  Var<Scalar> x = tape.parameter(logits);
  Var<Scalar> loss = softmax_cross_entropy(x, std::make_shared<const std::vector<std::uint32_t>>(labels),
                                           std::make_shared<const std::vector<Scalar>>(class_weights));
  tape.backward(loss);
  return {loss.value()(0, 0), x.grad()};
}

// Per-class weight 1/sqrt(frequency), rescaled to average 1 over the classes
// that occur. Classes with no points get weight 1.
std::vector<double> inverse_sqrt_frequency_weights(const std::vector<std::uint64_t>& class_counts);

// Argmax per row; ties go to the lowest class id.
std::vector<Label> argmax_rows(const Mat<float>& logits);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_miou = 0.0;
};

struct TrainConfig {
  int max_epochs = 100;
  // Stop once this many consecutive epochs fail to improve validation mIoU
  // (0 behaves like 1).
  int patience = 10;
  AdamConfig adam;
  std::uint64_t seed = 0;
  // Empty: inverse-sqrt frequency over the training labels.
  std::vector<double> class_weights;
  // Only "head.*" tensors receive updates.
  bool freeze_backbone = false;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  ModelParams best;
  int best_epoch = 0;
  std::vector<EpochRecord> history;
};

using Validator = std::function<double(const ModelParams&)>;

// Mean IoU of eval-mode predictions over the batch points (0 if undefined).
double validation_miou(const std::vector<Batch>& batches, const ModelParams& params);

// Mean loss over one pass of shuffled batches, updating `params` in place.
double train_epoch(const std::vector<Batch>& batches, ModelParams& params, AdamState<float>& adam,
                   const TrainConfig& config, const std::vector<float>& class_weights, int epoch);

TrainResult train(const std::vector<Batch>& train_batches, const std::vector<Batch>& val_batches,
                  ModelParams params, const TrainConfig& config);
TrainResult train(const std::vector<Batch>& train_batches, const Validator& validate, ModelParams params,
                  const TrainConfig& config);

// "epoch,train_loss,val_miou" rows.
std::string history_csv(const std::vector<EpochRecord>& history);

struct PredictSettings {
  std::size_t n_points = kDeskBatchPoints;
  double tile_size = kDefaultTileSize;
  std::uint64_t seed = 0;
};

// Every point labeled in the model's schema. Each tile's points are shuffled
// and split into chunks of n_points (the last one padded by resampling); a
// point seen more than once keeps the label from its last occurrence.
PointCloud predict_labels(const PointCloud& cloud, const ModelParams& params, const PredictSettings& settings);

}  // namespace urbanseg
