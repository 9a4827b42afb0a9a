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

#include <cstddef>
#include <nlohmann/json.hpp>
#include <vector>

namespace urbanseg {

// Network shape and regularization settings. Defaults are the desk-scale
// configuration: four encoder stages of 16/64/128/256 channels, 16 neighbors,
// 4x random decimation per stage.
struct LayerConfig {
  int k = 16;
  int decimation_ratio = 4;
  int num_layers = 4;
  std::vector<int> feature_dims{16, 64, 128, 256};
  int num_classes = 5;
  double dropout_rate = 0.5;
  bool use_batch_norm = true;

  // Per-point input: scaled height, rgb in [0,1], color-presence flag.
  int input_dim = 5;
  int stem_dim = 8;
  int head_dim = 32;
  double leaky_slope = 0.2;
  double bn_momentum = 0.9;
  double bn_eps = 1e-5;

  // Throws ValidationError when the invariants do not hold.
  void validate() const;

  // decimation_ratio ^ num_layers; batch sizes must be multiples of it.
  std::size_t points_divisor() const;
  // Point count entering each encoder stage for a batch of n points.
  std::vector<std::size_t> level_sizes(std::size_t n_points) const;

  friend bool operator==(const LayerConfig&, const LayerConfig&) = default;
};

void to_json(nlohmann::json& j, const LayerConfig& c);
// Missing keys keep their defaults.
void from_json(const nlohmann::json& j, LayerConfig& c);

}  // namespace urbanseg
