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

#include "urbanseg/layer_config.hpp"

#include <string>

#include "urbanseg/errors.hpp"

namespace urbanseg {

void LayerConfig::validate() const {
  auto fail = [](const std::string& what) { throw ValidationError("layer config: " + what); };
  if (k < 1) fail("k must be >= 1");
  if (decimation_ratio < 2) fail("decimation_ratio must be >= 2");
  if (num_layers < 1) fail("num_layers must be >= 1");
  if (feature_dims.size() != static_cast<std::size_t>(num_layers)) {
    fail("feature_dims has " + std::to_string(feature_dims.size()) + " entries, expected " +
         std::to_string(num_layers));
  }
  for (int d : feature_dims) {
    // Blocks split each width in half.
    if (d < 2 || d % 2 != 0) fail("feature_dims entries must be even and >= 2");
  }
  if (num_classes < 1) fail("num_classes must be >= 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) fail("dropout_rate must be in [0, 1)");
  if (input_dim < 1 || stem_dim < 1 || head_dim < 1) fail("layer widths must be positive");
  if (!(leaky_slope >= 0.0 && leaky_slope < 1.0)) fail("leaky_slope must be in [0, 1)");
  if (!(bn_momentum >= 0.0 && bn_momentum < 1.0)) fail("bn_momentum must be in [0, 1)");
  if (!(bn_eps > 0.0)) fail("bn_eps must be positive");
  // Overflow guard for points_divisor().
  double div = 1.0;
  for (int i = 0; i < num_layers; ++i) div *= decimation_ratio;
  if (div > 1e15) fail("decimation_ratio^num_layers is too large");
}

std::size_t LayerConfig::points_divisor() const {
  std::size_t d = 1;
  for (int i = 0; i < num_layers; ++i) d *= static_cast<std::size_t>(decimation_ratio);
  return d;
}

std::vector<std::size_t> LayerConfig::level_sizes(std::size_t n_points) const {
  validate();
  if (n_points == 0 || n_points % points_divisor() != 0) {
    throw ValidationError("batch size " + std::to_string(n_points) + " is not a multiple of " +
                          std::to_string(points_divisor()) + " (decimation_ratio^num_layers)");
  }
  std::vector<std::size_t> sizes;
  std::size_t n = n_points;
  for (int l = 0; l < num_layers; ++l) {
    sizes.push_back(n);
    n /= static_cast<std::size_t>(decimation_ratio);
  }
  return sizes;
}

void to_json(nlohmann::json& j, const LayerConfig& c) {
  j = nlohmann::json{{"k", c.k},
                     {"decimation_ratio", c.decimation_ratio},
                     {"num_layers", c.num_layers},
                     {"feature_dims", c.feature_dims},
                     {"num_classes", c.num_classes},
                     {"dropout_rate", c.dropout_rate},
                     {"use_batch_norm", c.use_batch_norm},
                     {"input_dim", c.input_dim},
                     {"stem_dim", c.stem_dim},
                     {"head_dim", c.head_dim},
                     {"leaky_slope", c.leaky_slope},
                     {"bn_momentum", c.bn_momentum},
                     {"bn_eps", c.bn_eps}};
}

void from_json(const nlohmann::json& j, LayerConfig& c) {
  if (!j.is_object()) throw ValidationError("layer config: expected a JSON object");
  static const char* const kKeys[] = {"k",         "decimation_ratio", "num_layers",  "feature_dims",
                                      "num_classes", "dropout_rate",   "use_batch_norm", "input_dim",
                                      "stem_dim",  "head_dim",         "leaky_slope", "bn_momentum",
                                      "bn_eps"};
  for (const auto& [key, _] : j.items()) {
    bool known = false;
    for (const char* k : kKeys) known = known || key == k;
    if (!known) throw ValidationError("layer config: unknown key '" + key + "'");
  }
  try {
    c.k = j.value("k", c.k);
    c.decimation_ratio = j.value("decimation_ratio", c.decimation_ratio);
    c.num_layers = j.value("num_layers", c.num_layers);
    c.feature_dims = j.value("feature_dims", c.feature_dims);
    c.num_classes = j.value("num_classes", c.num_classes);
    c.dropout_rate = j.value("dropout_rate", c.dropout_rate);
    c.use_batch_norm = j.value("use_batch_norm", c.use_batch_norm);
    c.input_dim = j.value("input_dim", c.input_dim);
    c.stem_dim = j.value("stem_dim", c.stem_dim);
    c.head_dim = j.value("head_dim", c.head_dim);
    c.leaky_slope = j.value("leaky_slope", c.leaky_slope);
    c.bn_momentum = j.value("bn_momentum", c.bn_momentum);
    c.bn_eps = j.value("bn_eps", c.bn_eps);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("layer config: ") + e.what());
  }
}

}  // namespace urbanseg
