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

#include "urbanseg/network.hpp"

#include <cmath>
#include <set>

namespace urbanseg {

namespace {

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

struct TensorShape {
  Eigen::Index rows;
  Eigen::Index cols;
};

std::map<std::string, TensorShape> expected_shapes(const LayerConfig& config) {
  std::map<std::string, TensorShape> shapes;
  for (const auto& d : dense_layers(config)) {
    shapes[d.prefix + ".weight"] = {d.in, d.out};
    if (d.bias) shapes[d.prefix + ".bias"] = {1, d.out};
    if (d.batch_norm) {
      for (const char* s : {".bn.gamma", ".bn.beta", ".bn.running_mean", ".bn.running_var"}) {
        shapes[d.prefix + s] = {1, d.out};
      }
    }
  }
  return shapes;
}

}  // namespace

bool is_trainable(const std::string& tensor_name) {
  return !ends_with(tensor_name, ".running_mean") && !ends_with(tensor_name, ".running_var");
}

bool is_head_tensor(const std::string& tensor_name) { return tensor_name.rfind("head.classifier.", 0) == 0; }

std::vector<DenseSpec> dense_layers(const LayerConfig& config) {
  config.validate();
  const bool bn = config.use_batch_norm;
  const auto& fd = config.feature_dims;
  const auto levels = static_cast<std::size_t>(config.num_layers);
  std::vector<DenseSpec> out;
  out.push_back({"stem", config.input_dim, config.stem_dim, true, bn});
  for (std::size_t l = 0; l < levels; ++l) {
    const std::string p = "enc" + std::to_string(l);
    const int d_in = l == 0 ? config.stem_dim : fd[l - 1];
    const int d = fd[l];
    const int h = d / 2;
    out.push_back({p + ".mlp_in", d_in, h, true, bn});
    out.push_back({p + ".locse1.mlp", 10, h, true, bn});
    out.push_back({p + ".pool1.score", d, d, false, false});
    out.push_back({p + ".pool1.mlp", d, h, true, bn});
    out.push_back({p + ".locse2.mlp", h, h, true, bn});
    out.push_back({p + ".pool2.score", d, d, false, false});
    out.push_back({p + ".pool2.mlp", d, d, true, bn});
    out.push_back({p + ".skip", d_in, d, true, bn});
  }
  out.push_back({"bottleneck", fd[levels - 1], fd[levels - 1], true, bn});
  for (std::size_t l = levels; l-- > 0;) {
    const int up = l + 1 == levels ? fd[levels - 1] : fd[l + 1];
    out.push_back({"dec" + std::to_string(l), fd[l] + up, fd[l], true, bn});
  }
  out.push_back({"head.fc", fd[0], config.head_dim, true, bn});
  out.push_back({"head.classifier", config.head_dim, config.num_classes, true, false});
  return out;
}

ModelParams init_model(const LayerConfig& config, const ClassSchema& schema, std::uint64_t seed) {
  if (static_cast<std::size_t>(config.num_classes) != schema.class_count()) {
    throw ValidationError("init_model: config has " + std::to_string(config.num_classes) +
                          " classes but schema '" + schema.name() + "' has " +
                          std::to_string(schema.class_count()));
  }
  ModelParams p{config, schema, {}, nlohmann::json::object()};
  std::mt19937_64 rng(seed);
  for (const auto& d : dense_layers(config)) {
    const double a = std::sqrt(6.0 / d.in);
    std::uniform_real_distribution<double> u(-a, a);
    Mat<float> w(d.in, d.out);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<float>(u(rng));
    p.tensors[d.prefix + ".weight"] = std::move(w);
    if (d.bias) p.tensors[d.prefix + ".bias"] = Mat<float>::Zero(1, d.out);
    if (d.batch_norm) {
      p.tensors[d.prefix + ".bn.gamma"] = Mat<float>::Ones(1, d.out);
      p.tensors[d.prefix + ".bn.beta"] = Mat<float>::Zero(1, d.out);
      p.tensors[d.prefix + ".bn.running_mean"] = Mat<float>::Zero(1, d.out);
      p.tensors[d.prefix + ".bn.running_var"] = Mat<float>::Ones(1, d.out);
    }
  }
  p.provenance = {{"init", "uniform"}, {"seed", seed}};
  return p;
}

std::size_t parameter_count(const LayerConfig& config) {
  std::size_t n = 0;
  for (const auto& [name, shape] : expected_shapes(config)) {
    if (is_trainable(name)) n += static_cast<std::size_t>(shape.rows * shape.cols);
  }
  return n;
}

void check_params(const ModelParams& params) {
  if (static_cast<std::size_t>(params.config.num_classes) != params.schema.class_count()) {
    throw ValidationError("model: class count differs between config and schema");
  }
  const auto shapes = expected_shapes(params.config);
  for (const auto& [name, shape] : shapes) {
    auto it = params.tensors.find(name);
    if (it == params.tensors.end()) throw ValidationError("model: missing tensor '" + name + "'");
    if (it->second.rows() != shape.rows || it->second.cols() != shape.cols) {
      throw ValidationError("model: tensor '" + name + "' has shape " + std::to_string(it->second.rows()) + "x" +
                            std::to_string(it->second.cols()) + ", expected " + std::to_string(shape.rows) + "x" +
                            std::to_string(shape.cols));
    }
    if (!it->second.allFinite()) throw ValidationError("model: tensor '" + name + "' has non-finite values");
  }
  for (const auto& [name, _] : params.tensors) {
    if (!shapes.count(name)) throw ValidationError("model: unexpected tensor '" + name + "'");
  }
}

NeighborIndex flatten_neighbors(const NeighborGraph& graph) {
  return std::make_shared<const std::vector<std::int32_t>>(graph.indices.data(),
                                                           graph.indices.data() + graph.indices.size());
}

std::vector<std::int32_t> nearest_indices(const Positions& coarse, const Positions& fine) {
  if (coarse.rows() == 0) throw ValidationError("nearest_indices: empty coarse set");
  const NeighborGraph g = knn(build_index(coarse), fine, 1);
  return {g.indices.data(), g.indices.data() + g.indices.size()};
}

Mat<float> forward(const Batch& batch, const ModelParams& params, Mode mode, std::uint64_t seed,
                   ParamTable<float>* state) {
  Tape<float> tape;
  ForwardContext<float> ctx(tape, params.tensors, params.config, mode);
  Var<float> logits = forward_graph(ctx, batch, seed);
  if (state) {
    for (const auto& [name, value] : ctx.state_updates()) (*state)[name] = value;
  }
  return logits.value();
}

}  // namespace urbanseg
