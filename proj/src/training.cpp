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

#include "urbanseg/training.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "urbanseg/metrics.hpp"
#include "urbanseg/parallel.hpp"

namespace urbanseg {

std::vector<double> inverse_sqrt_frequency_weights(const std::vector<std::uint64_t>& class_counts) {
  const double total = std::accumulate(class_counts.begin(), class_counts.end(), 0.0);
  std::vector<double> w(class_counts.size(), 1.0);
  if (total <= 0.0) return w;
  double sum = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < class_counts.size(); ++c) {
    if (class_counts[c] == 0) continue;
    w[c] = 1.0 / std::sqrt(static_cast<double>(class_counts[c]) / total);
    sum += w[c];
    ++present;
  }
  const double mean = sum / static_cast<double>(present);
  for (std::size_t c = 0; c < class_counts.size(); ++c) {
    if (class_counts[c] != 0) w[c] /= mean;
  }
  return w;
}

std::vector<Label> argmax_rows(const Mat<float>& logits) {
  std::vector<Label> out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < logits.cols(); ++c) {
      if (logits(r, c) > logits(r, best)) best = c;
    }
    out[static_cast<std::size_t>(r)] = static_cast<Label>(best);
  }
  return out;
}

double validation_miou(const std::vector<Batch>& batches, const ModelParams& params) {
  const auto classes = static_cast<std::size_t>(params.config.num_classes);
  std::vector<ConfusionMatrix> parts(batches.size(), ConfusionMatrix(classes));
  parallel_for(batches.size(), [&](std::size_t i) {
    const Batch& b = batches[i];
    if (!b.cloud.labels) throw ValidationError("validation batch has no labels");
    const auto pred = argmax_rows(forward(b, params, Mode::kEval, 0));
    accumulate(parts[i], *b.cloud.labels, pred);
  });
  ConfusionMatrix cm(classes);
  for (const auto& p : parts) cm.merge(p);
  if (cm.total() == 0) return 0.0;
  return compute_report(cm).mean_iou.value_or(0.0);
}

namespace {

std::vector<double> default_weights(const std::vector<Batch>& batches, std::size_t classes) {
  std::vector<std::uint64_t> counts(classes, 0);
  for (const auto& b : batches) {
    if (!b.cloud.labels) throw ValidationError("training batch has no labels");
    for (Label l : *b.cloud.labels) {
      if (l >= classes) throw ValidationError("training label " + std::to_string(l) + " out of range");
      ++counts[l];
    }
  }
  return inverse_sqrt_frequency_weights(counts);
}

}  // namespace

double train_epoch(const std::vector<Batch>& batches, ModelParams& params, AdamState<float>& adam,
                   const TrainConfig& config, const std::vector<float>& class_weights, int epoch) {
  std::vector<std::size_t> order(batches.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(derive_seed(config.seed, static_cast<std::uint64_t>(epoch)));
  std::shuffle(order.begin(), order.end(), rng);

  std::function<bool(const std::string&)> frozen;
  if (config.freeze_backbone) frozen = [](const std::string& n) { return n.rfind("head.", 0) != 0; };
  const auto weights = std::make_shared<const std::vector<float>>(class_weights);

  double total = 0.0;
  for (std::size_t step = 0; step < order.size(); ++step) {
    const Batch& b = batches[order[step]];
    if (!b.cloud.labels) throw ValidationError("training batch has no labels");
    Tape<float> tape;
    ForwardContext<float> ctx(tape, params.tensors, params.config, Mode::kTrain, frozen);
    const std::uint64_t dropout_seed =
        derive_seed(config.seed, (static_cast<std::uint64_t>(epoch) << 32) | (step + 1));
    Var<float> logits = forward_graph(ctx, b, dropout_seed);
    Var<float> loss =
        softmax_cross_entropy(logits, std::make_shared<const std::vector<std::uint32_t>>(*b.cloud.labels), weights);
    tape.backward(loss);
    total += loss.value()(0, 0);

    ParamTable<float> grads;
    for (const auto& [name, leaf] : ctx.leaves()) {
      if (!leaf.requires_grad()) continue;
      grads[name] = leaf.grad().size() ? leaf.grad() : Mat<float>::Zero(leaf.rows(), leaf.cols());
    }
    ParamTable<float> updates = ctx.state_updates();
    adam_step(params.tensors, grads, adam, config.adam);
    for (auto& [name, value] : updates) params.tensors[name] = std::move(value);
  }
  return order.empty() ? 0.0 : total / static_cast<double>(order.size());
}

TrainResult train(const std::vector<Batch>& train_batches, const Validator& validate, ModelParams params,
                  const TrainConfig& config) {
  if (train_batches.empty()) throw ValidationError("train: no training batches");
  if (config.max_epochs < 1) throw ValidationError("train: max_epochs must be >= 1");
  if (config.patience < 0) throw ValidationError("train: patience must be >= 0");
  check_params(params);
  const auto classes = static_cast<std::size_t>(params.config.num_classes);
  std::vector<double> w = config.class_weights.empty() ? default_weights(train_batches, classes) : config.class_weights;
  if (w.size() != classes) throw ValidationError("train: class weight count differs from class count");
  const std::vector<float> wf(w.begin(), w.end());

  AdamState<float> adam;
  TrainResult result;
  result.best = params;
  double best = -std::numeric_limits<double>::infinity();
  int bad_epochs = 0;
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = train_epoch(train_batches, params, adam, config, wf, epoch);
    rec.val_miou = validate(params);
    result.history.push_back(rec);
    if (config.on_epoch) config.on_epoch(rec);
    if (rec.val_miou > best) {
      best = rec.val_miou;
      result.best = params;
      result.best_epoch = epoch;
      bad_epochs = 0;
    } else if (++bad_epochs >= std::max(1, config.patience)) {
      break;
    }
  }
  result.best.provenance["best_epoch"] = result.best_epoch;
  result.best.provenance["best_val_miou"] = best;
  result.best.provenance["epochs_run"] = result.history.size();
  result.best.provenance["train_seed"] = config.seed;
  return result;
}

TrainResult train(const std::vector<Batch>& train_batches, const std::vector<Batch>& val_batches,
                  ModelParams params, const TrainConfig& config) {
  if (val_batches.empty()) throw ValidationError("train: no validation batches");
  return train(train_batches, [&](const ModelParams& p) { return validation_miou(val_batches, p); },
               std::move(params), config);
}

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::ostringstream os;
  os.precision(17);
  os << "epoch,train_loss,val_miou\n";
  for (const auto& r : history) os << r.epoch << "," << r.train_loss << "," << r.val_miou << "\n";
  return os.str();
}

PointCloud predict_labels(const PointCloud& cloud, const ModelParams& params, const PredictSettings& settings) {
  if (cloud.empty()) throw ValidationError("predict: empty cloud");
  check_params(params);
  const TileGrid grid = tile(cloud, settings.tile_size);

  std::vector<std::vector<Eigen::Index>> chunks;
  std::uint64_t tile_no = 0;
  for (const auto& [key, members] : grid.tiles) {
    std::vector<Eigen::Index> shuffled = members;
    std::mt19937_64 rng(derive_seed(settings.seed, tile_no++));
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    for (std::size_t begin = 0; begin < shuffled.size(); begin += settings.n_points) {
      const std::size_t end = std::min(shuffled.size(), begin + settings.n_points);
      chunks.emplace_back(shuffled.begin() + static_cast<std::ptrdiff_t>(begin),
                          shuffled.begin() + static_cast<std::ptrdiff_t>(end));
    }
  }

  // Per chunk: (original index, label) in batch row order.
  std::vector<std::vector<std::pair<Eigen::Index, Label>>> results(chunks.size());
  parallel_for(chunks.size(), [&](std::size_t c) {
    const PointCloud sub = select(cloud, chunks[c]);
    const Batch b = make_batch(sub, settings.n_points, params.config, derive_seed(settings.seed, 1000003 + c));
    const auto pred = argmax_rows(forward(b, params, Mode::kEval, 0));
    auto& out = results[c];
    out.reserve(pred.size());
    for (std::size_t r = 0; r < pred.size(); ++r) {
      out.emplace_back(chunks[c][static_cast<std::size_t>(b.source_indices[r])], pred[r]);
    }
  });

  PointCloud labeled = cloud;
  labeled.labels = Labels(static_cast<std::size_t>(cloud.size()), 0);
  labeled.schema_name = params.schema.name();
  for (const auto& chunk : results) {
    for (const auto& [idx, label] : chunk) (*labeled.labels)[static_cast<std::size_t>(idx)] = label;
  }
  return labeled;
}

}  // namespace urbanseg
