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

#include <cstdint>
#include <map>
#include <string>
#include <string_view>

#include "urbanseg/core_model.hpp"
#include "urbanseg/network.hpp"

namespace urbanseg {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// "PCSK" | u32 version | u32 len + metadata JSON | u32 tensor count |
// per tensor: u32 len + name, u8 dtype, u32 rank, u64 dims[rank], payload.
// All integers and payloads little-endian.
std::string serialize_checkpoint(const ModelParams& params);
// Throws FormatError on corruption or inconsistent metadata.
ModelParams parse_checkpoint(std::string_view bytes);

void save_checkpoint(const ModelParams& params, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

// Target class id -> source class id.
using Correspondence = std::map<Label, Label>;

// Parses {"<target class name>": "<source class name>", ...}.
Correspondence load_correspondence_json(const std::string& json_text, const ClassSchema& target,
                                        const ClassSchema& source);

// Copies every backbone tensor from `source`, rebuilds the classifier for
// `target_schema`, copying mapped classes' columns and re-initialising the
// rest under `seed`.
ModelParams init_from_source(const ModelParams& source, const ClassSchema& target_schema,
                             const Correspondence& correspondence, std::uint64_t seed);

// As above, but also checks that `target_config` matches the source
// everywhere except num_classes.
ModelParams init_from_source(const ModelParams& source, const LayerConfig& target_config,
                             const ClassSchema& target_schema, const Correspondence& correspondence,
                             std::uint64_t seed);

}  // namespace urbanseg
