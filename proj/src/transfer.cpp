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

#include "urbanseg/transfer.hpp"

#include <cmath>
#include <random>

#include "binary_io.hpp"
#include "urbanseg/file_io.hpp"
#include "urbanseg/ply_io.hpp"

namespace urbanseg {

namespace {

constexpr std::string_view kMagic = "PCSK";

nlohmann::json metadata(const ModelParams& p) {
  return {{"layer_config", p.config},
          {"schema", {{"name", p.schema.name()}, {"classes", p.schema.class_names()}}},
          {"provenance", p.provenance}};
}

}  // namespace

std::string serialize_checkpoint(const ModelParams& params) {
  check_params(params);
  detail::ByteWriter w;
  w.put_bytes(kMagic);
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put_string(metadata(params).dump());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(params.tensors.size()));
  for (const auto& [name, t] : params.tensors) {
    w.put_string(name);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(DType::kFloat32));
    w.put<std::uint32_t>(2);
    w.put<std::uint64_t>(static_cast<std::uint64_t>(t.rows()));
    w.put<std::uint64_t>(static_cast<std::uint64_t>(t.cols()));
    w.put_array(t.data(), static_cast<std::size_t>(t.size()));
  }
  return std::move(w.bytes());
}

ModelParams parse_checkpoint(std::string_view bytes) {
  detail::ByteReader r(bytes, "checkpoint");
  if (r.get_bytes(std::min<std::size_t>(4, bytes.size())) != kMagic) throw FormatError("checkpoint: bad magic");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  }
  ModelParams p;
  try {
    const auto meta = nlohmann::json::parse(r.get_string(1u << 26));
    p.config = meta.at("layer_config").get<LayerConfig>();
    const auto& schema = meta.at("schema");
    p.schema = ClassSchema(schema.at("name").get<std::string>(), schema.at("classes").get<std::vector<std::string>>());
    p.provenance = meta.at("provenance");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: bad metadata: ") + e.what());
  } catch (const ValidationError& e) {
    throw FormatError(std::string("checkpoint: bad metadata: ") + e.what());
  }
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.get_string();
    const auto dtype = r.get<std::uint8_t>();
    if (dtype != static_cast<std::uint8_t>(DType::kFloat32)) {
      throw FormatError("checkpoint: tensor '" + name + "' has unsupported dtype");
    }
    if (r.get<std::uint32_t>() != 2) throw FormatError("checkpoint: tensor '" + name + "' is not 2-D");
    const auto rows = r.get<std::uint64_t>();
    const auto cols = r.get<std::uint64_t>();
    if (rows > (1u << 30) || cols > (1u << 30) || rows * cols * sizeof(float) > r.remaining()) {
      throw FormatError("checkpoint: tensor '" + name + "' truncated");
    }
    Mat<float> t(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    r.get_array(t.data(), static_cast<std::size_t>(t.size()));
    if (!p.tensors.emplace(std::move(name), std::move(t)).second) throw FormatError("checkpoint: duplicate tensor");
  }
  if (r.remaining() != 0) throw FormatError("checkpoint: trailing bytes");
  try {
    check_params(p);
  } catch (const ValidationError& e) {
    throw FormatError(std::string("checkpoint: inconsistent contents: ") + e.what());
  }
  return p;
}

void save_checkpoint(const ModelParams& params, const std::string& path) {
  write_file_atomic(path, serialize_checkpoint(params));
}

ModelParams load_checkpoint(const std::string& path) { return parse_checkpoint(read_file(path)); }

Correspondence load_correspondence_json(const std::string& json_text, const ClassSchema& target,
                                        const ClassSchema& source) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("correspondence: ") + e.what());
  }
  if (!j.is_object()) throw ValidationError("correspondence: expected an object {target: source}");
  Correspondence out;
  for (const auto& [t, s] : j.items()) {
    if (!s.is_string()) throw ValidationError("correspondence: value for '" + t + "' must be a class name");
    out[target.id_of(t)] = source.id_of(s.get<std::string>());
  }
  return out;
}

ModelParams init_from_source(const ModelParams& source, const ClassSchema& target_schema,
                             const Correspondence& correspondence, std::uint64_t seed) {
  check_params(source);
  const auto classes = static_cast<int>(target_schema.class_count());
  if (classes < 1) throw ValidationError("transfer: target schema has no classes");
  for (const auto& [t, s] : correspondence) {
    if (t >= target_schema.class_count()) throw ValidationError("transfer: target class id out of range");
    if (s >= source.schema.class_count()) throw ValidationError("transfer: source class id out of range");
  }
  ModelParams out;
  out.config = source.config;
  out.config.num_classes = classes;
  out.schema = target_schema;
  for (const auto& [name, t] : source.tensors) {
    if (!is_head_tensor(name)) out.tensors.emplace(name, t);
  }
  const Mat<float>& sw = source.tensors.at(kClassifierWeight);
  const Mat<float>& sb = source.tensors.at(kClassifierBias);
  const Eigen::Index fan_in = sw.rows();
  Mat<float> w(fan_in, classes);
  Mat<float> b = Mat<float>::Zero(1, classes);
  std::mt19937_64 rng(seed);
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> u(-a, a);
  for (int c = 0; c < classes; ++c) {
    auto it = correspondence.find(static_cast<Label>(c));
    if (it != correspondence.end()) {
      w.col(c) = sw.col(it->second);
      b(0, c) = sb(0, it->second);
    } else {
      for (Eigen::Index r = 0; r < fan_in; ++r) w(r, c) = static_cast<float>(u(rng));
    }
  }
  out.tensors[kClassifierWeight] = std::move(w);
  out.tensors[kClassifierBias] = std::move(b);

  nlohmann::json corr = nlohmann::json::object();
  for (const auto& [t, s] : correspondence) corr[target_schema.class_name(t)] = source.schema.class_name(s);
  out.provenance = {{"transferred_from", {{"schema", source.schema.name()}, {"provenance", source.provenance}}},
                    {"correspondence", corr},
                    {"head_seed", seed}};
  check_params(out);
  return out;
}

ModelParams init_from_source(const ModelParams& source, const LayerConfig& target_config,
                             const ClassSchema& target_schema, const Correspondence& correspondence,
                             std::uint64_t seed) {
  LayerConfig a = source.config;
  LayerConfig b = target_config;
  a.num_classes = b.num_classes = 0;
  if (!(a == b)) throw ValidationError("transfer: source and target backbones differ");
  if (static_cast<std::size_t>(target_config.num_classes) != target_schema.class_count()) {
    throw ValidationError("transfer: target config class count differs from target schema");
  }
  return init_from_source(source, target_schema, correspondence, seed);
}

}  // namespace urbanseg
