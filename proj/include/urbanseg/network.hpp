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
#include <functional>
#include <map>
#include <memory>
#include <nlohmann/json.hpp>
#include <random>
#include <string>
#include <vector>

#include "urbanseg/core_model.hpp"
#include "urbanseg/layer_config.hpp"
#include "urbanseg/preprocess.hpp"
#include "urbanseg/spatial_index.hpp"
#include "urbanseg/tape.hpp"

namespace urbanseg {

template <typename Scalar>
using ParamTable = std::map<std::string, Mat<Scalar>>;

// Named tensors of a model plus the configuration and class schema they were
// built for. Dense layers store weights as (in x out) and biases as (1 x out);
// the classifier therefore has one column per class.
struct ModelParams {
  LayerConfig config;
  ClassSchema schema;
  ParamTable<float> tensors;
  nlohmann::json provenance = nlohmann::json::object();

  template <typename Scalar>
  ParamTable<Scalar> cast() const {
    ParamTable<Scalar> out;
    for (const auto& [name, t] : tensors) out.emplace(name, t.template cast<Scalar>());
    return out;
  }
};

inline constexpr const char* kClassifierWeight = "head.classifier.weight";
inline constexpr const char* kClassifierBias = "head.classifier.bias";

// Running batch-norm statistics are state, not trainable parameters.
bool is_trainable(const std::string& tensor_name);
bool is_head_tensor(const std::string& tensor_name);

enum class Activation { kNone, kLeakyRelu };

// One dense layer (shared 1x1 MLP) of the network.
struct DenseSpec {
  std::string prefix;
  int in = 0;
  int out = 0;
  bool bias = true;
  bool batch_norm = false;
};

std::vector<DenseSpec> dense_layers(const LayerConfig& config);

// Weights uniform in +-sqrt(6 / fan_in); biases and BN shifts zero; BN scales
// and running variances one.
ModelParams init_model(const LayerConfig& config, const ClassSchema& schema, std::uint64_t seed);

// Number of trainable scalars implied by the configuration.
std::size_t parameter_count(const LayerConfig& config);

// Throws ValidationError on missing tensors, wrong shapes, or non-finite values.
void check_params(const ModelParams& params);

enum class Mode { kTrain, kEval };

template <typename Scalar>
struct BatchNormUpdate {
  Mat<Scalar> running_mean;
  Mat<Scalar> running_var;
};

// Binds a parameter table to a tape for one forward evaluation.
template <typename Scalar>
class ForwardContext {
 public:
  ForwardContext(Tape<Scalar>& tape, const ParamTable<Scalar>& params, const LayerConfig& config,
                 Mode mode, std::function<bool(const std::string&)> frozen = {})
      : tape_(tape), params_(params), config_(config), mode_(mode), frozen_(std::move(frozen)) {}

  Tape<Scalar>& tape() { return tape_; }
  const LayerConfig& config() const { return config_; }
  bool training() const { return mode_ == Mode::kTrain; }
  Scalar slope() const { return static_cast<Scalar>(config_.leaky_slope); }

  bool has(const std::string& name) const { return params_.count(name) != 0; }

  // Leaf for a named tensor, created once per context. Frozen and
  // non-trainable tensors become constants.
  Var<Scalar> param(const std::string& name) {
    if (auto it = leaves_.find(name); it != leaves_.end()) return it->second;
    auto p = params_.find(name);
    if (p == params_.end()) throw ValidationError("missing parameter tensor '" + name + "'");
    const bool grad = is_trainable(name) && !(frozen_ && frozen_(name));
    Var<Scalar> v = grad ? tape_.parameter(p->second) : tape_.constant(p->second);
    leaves_.emplace(name, v);
    return v;
  }

  const Mat<Scalar>& raw(const std::string& name) const {
    auto p = params_.find(name);
    if (p == params_.end()) throw ValidationError("missing parameter tensor '" + name + "'");
    return p->second;
  }

  Var<Scalar> linear(const Var<Scalar>& x, const std::string& prefix) {
    Var<Scalar> y = matmul(x, param(prefix + ".weight"));
    if (has(prefix + ".bias")) y = add_row(y, param(prefix + ".bias"));
    return y;
  }

  // linear -> [batch norm] -> [leaky ReLU]
  Var<Scalar> shared_mlp(const Var<Scalar>& x, const std::string& prefix, Activation act) {
    Var<Scalar> y = linear(x, prefix);
    if (has(prefix + ".bn.gamma")) {
      const std::string bn = prefix + ".bn";
      const Mat<Scalar>& rm = raw(bn + ".running_mean");
      const Mat<Scalar>& rv = raw(bn + ".running_var");
      Mat<Scalar> new_mean = rm;
      Mat<Scalar> new_var = rv;
      y = batch_norm(y, param(bn + ".gamma"), param(bn + ".beta"), new_mean, new_var, training(),
                     static_cast<Scalar>(config_.bn_momentum), static_cast<Scalar>(config_.bn_eps));
      if (training()) {
        updates_[bn + ".running_mean"] = std::move(new_mean);
        updates_[bn + ".running_var"] = std::move(new_var);
      }
    }
    if (act == Activation::kLeakyRelu) y = leaky_relu(y, slope());
    return y;
  }

  const std::map<std::string, Var<Scalar>>& leaves() const { return leaves_; }
  // Running statistics produced by training-mode batch norm.
  const ParamTable<Scalar>& state_updates() const { return updates_; }

 private:
  Tape<Scalar>& tape_;
  const ParamTable<Scalar>& params_;
  const LayerConfig& config_;
  Mode mode_;
  std::function<bool(const std::string&)> frozen_;
  std::map<std::string, Var<Scalar>> leaves_;
  ParamTable<Scalar> updates_;
};

using NeighborIndex = std::shared_ptr<const std::vector<std::int32_t>>;

// Row-major flattening of a graph's index table: entry i*k + j.
NeighborIndex flatten_neighbors(const NeighborGraph& graph);

// Per (point i, neighbor j) row i*k + j: [p_i, p_j, p_i - p_j, |p_i - p_j|].
template <typename Scalar>
Mat<Scalar> relative_position_encoding(const Positions& positions, const NeighborGraph& graph) {
  const Eigen::Index n = graph.indices.rows();
  const Eigen::Index k = graph.indices.cols();
  if (positions.rows() != n) throw ValidationError("locse: positions and graph row counts differ");
  Mat<Scalar> enc(n * k, 10);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) {
      const auto nb = graph.indices(i, j);
      if (nb < 0 || nb >= n) throw ValidationError("locse: neighbor index out of range");
      const Eigen::Vector3d pi = positions.row(i).transpose();
      const Eigen::Vector3d pj = positions.row(nb).transpose();
      const Eigen::Vector3d d = pi - pj;
      auto row = enc.row(i * k + j);
      row.template segment<3>(0) = pi.cast<Scalar>().transpose();
      row.template segment<3>(3) = pj.cast<Scalar>().transpose();
      row.template segment<3>(6) = d.cast<Scalar>().transpose();
      row(9) = static_cast<Scalar>(d.norm());
    }
  }
  return enc;
}

template <typename Scalar>
struct LocseOutput {
  Var<Scalar> augmented;  // [encoding | neighbor feature], (N*k) x (d_mlp + d_in)
  Var<Scalar> encoding;   // MLP(spatial input), (N*k) x d_mlp
};

// Local spatial encoding: r_ij = MLP(spatial_ij), concatenated with the
// neighbor's feature f_j.
template <typename Scalar>
LocseOutput<Scalar> locse_encode(ForwardContext<Scalar>& ctx, const Var<Scalar>& spatial,
                                 const Var<Scalar>& features, const NeighborIndex& neighbors,
                                 const std::string& prefix) {
  if (spatial.rows() != static_cast<Eigen::Index>(neighbors->size())) {
    throw ValidationError("locse: spatial rows differ from neighbor count");
  }
  Var<Scalar> r = ctx.shared_mlp(spatial, prefix + ".mlp", Activation::kLeakyRelu);
  Var<Scalar> fj = gather_rows(features, neighbors);
  return {concat_cols(r, fj), r};
}

template <typename Scalar>
LocseOutput<Scalar> locse_encode(ForwardContext<Scalar>& ctx, const Positions& positions,
                                 const Var<Scalar>& features, const NeighborGraph& graph,
                                 const std::string& prefix) {
  if (features.rows() != graph.rows()) throw ValidationError("locse: feature rows differ from graph rows");
  Var<Scalar> spatial = ctx.tape().constant(relative_position_encoding<Scalar>(positions, graph));
  return locse_encode(ctx, spatial, features, flatten_neighbors(graph), prefix);
}

// Attentive pooling over groups of k neighbor rows: per-channel softmax of
// a shared linear score, weighted sum, then a shared MLP.
template <typename Scalar>
Var<Scalar> attentive_pool(ForwardContext<Scalar>& ctx, const Var<Scalar>& neighbor_features, int k,
                           const std::string& prefix, Activation act) {
  if (k < 1 || neighbor_features.rows() % k != 0) throw ValidationError("attentive_pool: bad k");
  Var<Scalar> scores = group_softmax(matmul(neighbor_features, ctx.param(prefix + ".score.weight")), k);
  Var<Scalar> pooled = group_sum(mul(scores, neighbor_features), k);
  return ctx.shared_mlp(pooled, prefix + ".mlp", act);
}

// Attention weights alone (rows of each k-block sum to one per channel).
template <typename Scalar>
Mat<Scalar> attention_scores(ForwardContext<Scalar>& ctx, const Var<Scalar>& neighbor_features, int k,
                             const std::string& prefix) {
  return group_softmax(matmul(neighbor_features, ctx.param(prefix + ".score.weight")), k).value();
}

// Two LocSE + attentive pooling stages plus a shortcut:
//   leaky_relu(pool2(locse2(pool1(locse1(x)))) + skip(x))
template <typename Scalar>
Var<Scalar> dilated_residual_block(ForwardContext<Scalar>& ctx, const Positions& positions,
                                   const Var<Scalar>& features, const NeighborGraph& graph,
                                   const std::string& prefix) {
  if (features.rows() != graph.rows() || positions.rows() != graph.rows()) {
    throw ValidationError("residual block: positions/features/graph row counts differ");
  }
  const NeighborIndex neighbors = flatten_neighbors(graph);
  Var<Scalar> spatial = ctx.tape().constant(relative_position_encoding<Scalar>(positions, graph));
  Var<Scalar> h = ctx.shared_mlp(features, prefix + ".mlp_in", Activation::kLeakyRelu);
  auto first = locse_encode(ctx, spatial, h, neighbors, prefix + ".locse1");
  Var<Scalar> pooled1 = attentive_pool(ctx, first.augmented, graph.k, prefix + ".pool1", Activation::kLeakyRelu);
  auto second = locse_encode(ctx, first.encoding, pooled1, neighbors, prefix + ".locse2");
  Var<Scalar> pooled2 = attentive_pool(ctx, second.augmented, graph.k, prefix + ".pool2", Activation::kNone);
  Var<Scalar> shortcut = ctx.shared_mlp(features, prefix + ".skip", Activation::kNone);
  return leaky_relu(add(pooled2, shortcut), ctx.slope());
}

// For every fine point, the index of its nearest coarse point (ties toward
// the lower index).
std::vector<std::int32_t> nearest_indices(const Positions& coarse, const Positions& fine);

// Feature of the nearest coarse point for every fine point.
template <typename Scalar>
Mat<Scalar> nearest_upsample(const Mat<Scalar>& coarse_features, const Positions& coarse_positions,
                             const Positions& fine_positions) {
  if (coarse_positions.rows() == 0) throw ValidationError("nearest_upsample: empty coarse set");
  if (coarse_features.rows() != coarse_positions.rows()) {
    throw ValidationError("nearest_upsample: coarse features and positions differ in rows");
  }
  const auto idx = nearest_indices(coarse_positions, fine_positions);
  Mat<Scalar> out(fine_positions.rows(), coarse_features.cols());
  for (Eigen::Index r = 0; r < out.rows(); ++r) out.row(r) = coarse_features.row(idx[static_cast<std::size_t>(r)]);
  return out;
}

template <typename Scalar>
Var<Scalar> classification_head(ForwardContext<Scalar>& ctx, const Var<Scalar>& features, std::uint64_t seed) {
  Var<Scalar> h = ctx.shared_mlp(features, "head.fc", Activation::kLeakyRelu);
  const double p = ctx.config().dropout_rate;
  if (ctx.training() && p > 0.0) {
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution keep(1.0 - p);
    auto mask = std::make_shared<Mat<Scalar>>(h.rows(), h.cols());
    const Scalar scale = static_cast<Scalar>(1.0 / (1.0 - p));
    for (Eigen::Index i = 0; i < mask->size(); ++i) mask->data()[i] = keep(rng) ? scale : Scalar(0);
    h = scale_by(h, std::shared_ptr<const Mat<Scalar>>(mask));
  }
  return ctx.linear(h, "head.classifier");
}

// Full encoder-decoder on the tape; returns n_points x num_classes logits.
template <typename Scalar>
Var<Scalar> forward_graph(ForwardContext<Scalar>& ctx, const Batch& batch, std::uint64_t seed) {
  const LayerConfig& cfg = ctx.config();
  const auto levels = static_cast<std::size_t>(cfg.num_layers);
  if (batch.graphs.size() != levels || batch.downsample.size() != levels ||
      batch.upsample.size() != levels || batch.level_positions.size() != levels) {
    throw ValidationError("forward: batch was built for a different number of layers");
  }
  for (std::size_t l = 0; l < levels; ++l) {
    if (batch.graphs[l].k != cfg.k) throw ValidationError("forward: batch neighbor count differs from config k");
  }
  Var<Scalar> x = ctx.tape().constant(input_features(batch).template cast<Scalar>());
  if (x.cols() != cfg.input_dim) throw ValidationError("forward: input width differs from config");
  Var<Scalar> f = ctx.shared_mlp(x, "stem", Activation::kLeakyRelu);

  std::vector<Var<Scalar>> skips;
  for (std::size_t l = 0; l < levels; ++l) {
    const std::string prefix = "enc" + std::to_string(l);
    f = dilated_residual_block(ctx, batch.level_positions[l], f, batch.graphs[l], prefix);
    skips.push_back(f);
    f = gather_rows(f, std::make_shared<const std::vector<std::int32_t>>(batch.downsample[l]));
  }
  f = ctx.shared_mlp(f, "bottleneck", Activation::kLeakyRelu);
  for (std::size_t l = levels; l-- > 0;) {
    Var<Scalar> up = gather_rows(f, std::make_shared<const std::vector<std::int32_t>>(batch.upsample[l]));
    f = ctx.shared_mlp(concat_cols(skips[l], up), "dec" + std::to_string(l), Activation::kLeakyRelu);
  }
  return classification_head(ctx, f, seed);
}

// Logits for a batch. Training mode samples dropout from `seed` and writes
// refreshed batch-norm running statistics into `state` (if given).
Mat<float> forward(const Batch& batch, const ModelParams& params, Mode mode, std::uint64_t seed,
                   ParamTable<float>* state = nullptr);

}  // namespace urbanseg
