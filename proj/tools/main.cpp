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

// urbanseg command-line driver.

#include <CLI11.hpp>
#include <algorithm>
#include <filesystem>
#include <iostream>
#include <nlohmann/json.hpp>
#include <thread>

#include "json_config.hpp"
#include "urbanseg/core_model.hpp"
#include "urbanseg/errors.hpp"
#include "urbanseg/file_io.hpp"
#include "urbanseg/metrics.hpp"
#include "urbanseg/parallel.hpp"
#include "urbanseg/ply_io.hpp"
#include "urbanseg/postprocess.hpp"
#include "urbanseg/preprocess.hpp"
#include "urbanseg/synth.hpp"
#include "urbanseg/training.hpp"
#include "urbanseg/transfer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace urbanseg::cli {
namespace {

constexpr const char* kToolVersion = "0.1.0";

enum ExitCode { kOk = 0, kValidation = 1, kFormat = 2 };

struct Logger {
  bool as_json = false;

  void info(const std::string& msg, const json& fields = json::object()) const { write("info", msg, fields); }
  void error(const std::string& msg) const { write("error", msg, json::object()); }

  void write(const char* level, const std::string& msg, const json& fields) const {
    if (as_json) {
      json line = {{"level", level}, {"msg", msg}};
      if (!fields.empty()) line["fields"] = fields;
      std::cerr << line.dump() << "\n";
      return;
    }
    std::cerr << "[" << level << "] " << msg;
    for (const auto& [k, v] : fields.items()) std::cerr << " " << k << "=" << (v.is_string() ? v.get<std::string>() : v.dump());
    std::cerr << "\n";
  }
};

// Records what a run read, wrote and used; written next to the primary output.
class Manifest {
 public:
  explicit Manifest(std::string command) { doc_ = {{"command", std::move(command)}, {"tool_version", kToolVersion}}; }

  void input(const std::string& path, std::string_view bytes) {
    doc_["inputs"].push_back({{"path", path}, {"sha256", sha256_hex(bytes)}});
  }
  void input(const std::string& path) { input(path, read_file(path)); }
  void output(const std::string& path, std::string_view bytes) {
    doc_["outputs"].push_back({{"path", path}, {"sha256", sha256_hex(bytes)}});
  }
  json& parameters() { return doc_["parameters"]; }
  json& seeds() { return doc_["seeds"]; }

  void write(const std::string& path) const { write_file_atomic(path, doc_.dump(2) + "\n"); }

 private:
  json doc_;
};

void write_output(Manifest& m, const std::string& path, const std::string& bytes) {
  if (const auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  write_file_atomic(path, bytes);
  m.output(path, bytes);
}

PlyFormat parse_format(const std::string& f) {
  if (f == "binary") return PlyFormat::kBinaryLittleEndian;
  if (f == "ascii") return PlyFormat::kAscii;
  throw ValidationError("--format must be binary or ascii");
}

// Built-in schema name or a JSON schema file.
ClassSchema load_schema(const std::string& spec, Manifest* m = nullptr) {
  for (const char* name : {"urban5", "sensat_urban", "toronto3d", "synthetic_source"}) {
    if (spec == name) return builtin_schema(spec);
  }
  if (!fs::exists(spec)) return builtin_schema(spec);  // throws with the known names
  const auto bytes = read_file(spec);
  if (m) m->input(spec, bytes);
  return load_class_schema_json(bytes);
}

json parse_json(const std::string& bytes, const std::string& what) {
  try {
    return json::parse(bytes);
  } catch (const json::exception& e) {
    throw FormatError(what + ": " + e.what());
  }
}

template <typename T>
T load_json_as(const std::string& path, Manifest& m, const std::string& what) {
  const auto bytes = read_file(path);
  m.input(path, bytes);
  const json j = parse_json(bytes, what);
  try {
    return j.get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(what + ": " + e.what());
  }
}

PointCloud load_cloud(const std::string& path, Manifest& m) {
  const auto bytes = read_file(path);
  m.input(path, bytes);
  if (fs::path(path).extension() == ".pcb1") return cloud_from_bundle(ArrayBundle::parse(bytes));
  return read_ply(bytes);
}

// Expands directories into their *.pcb1 files, sorted by name.
std::vector<std::string> expand_bundles(const std::vector<std::string>& paths) {
  std::vector<std::string> out;
  for (const auto& p : paths) {
    if (fs::is_directory(p)) {
      std::vector<std::string> found;
      for (const auto& e : fs::directory_iterator(p)) {
        if (e.path().extension() == ".pcb1") found.push_back(e.path().string());
      }
      std::sort(found.begin(), found.end());
      out.insert(out.end(), found.begin(), found.end());
    } else {
      out.push_back(p);
    }
  }
  return out;
}

std::string default_manifest(const std::string& manifest, const std::string& primary) {
  return manifest.empty() ? primary + ".manifest.json" : manifest;
}

// ---------------------------------------------------------------------------

struct SynthCmd {
  std::string out, spec_path, format = "binary", manifest;
  std::uint64_t seed = 0;
  bool source = false;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("synth", "Generate a labeled synthetic urban scene");
    c->add_option("--out,-o", out, "Output PLY")->required();
    c->add_option("--spec", spec_path, "SceneSpec JSON (defaults when omitted)");
    c->add_option("--seed", seed, "Scene seed (overrides the spec's)");
    c->add_flag("--source", source, "Eight-class pre-training scene instead of the five-class target");
    c->add_option("--format", format, "binary or ascii");
    c->add_option("--manifest", manifest, "Manifest path (default <out>.manifest.json)");
  }

  int run(const CLI::App& app, const Logger& log) {
    Manifest m("synth");
    SceneSpec spec;
    if (!spec_path.empty()) spec = load_json_as<SceneSpec>(spec_path, m, "scene spec");
    if (app.get_subcommand("synth")->count("--seed") > 0 || spec_path.empty()) spec.seed = seed;
    const PointCloud cloud = source ? generate_source_scene(spec) : generate_scene(spec);
    write_output(m, out, write_ply(cloud, parse_format(format)));
    m.parameters() = {{"spec", spec}, {"source", source}, {"format", format}};
    m.seeds() = {{"scene", spec.seed}};
    m.write(default_manifest(manifest, out));
    log.info("wrote scene", {{"path", out}, {"points", cloud.size()}, {"schema", cloud.schema_name}});
    return kOk;
  }
};

struct ConvertCmd {
  std::string in, out, map_path, format = "binary", manifest;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("convert", "Convert between PLY and PCB1 bundles, optionally remapping labels");
    c->add_option("--in,-i", in, "Input .ply or .pcb1")->required();
    c->add_option("--out,-o", out, "Output .ply or .pcb1")->required();
    c->add_option("--map", map_path, "Class map JSON applied to the labels");
    c->add_option("--format", format, "PLY encoding for .ply output: binary or ascii");
    c->add_option("--manifest", manifest, "Manifest path (default <out>.manifest.json)");
  }

  int run(const CLI::App&, const Logger& log) {
    Manifest m("convert");
    PointCloud cloud = load_cloud(in, m);
    if (!map_path.empty()) {
      const auto bytes = read_file(map_path);
      m.input(map_path, bytes);
      cloud = remap_labels(cloud, load_class_map_json(bytes));
    }
    const bool to_bundle = fs::path(out).extension() == ".pcb1";
    write_output(m, out, to_bundle ? cloud_to_bundle(cloud).serialize() : write_ply(cloud, parse_format(format)));
    m.parameters() = {{"format", to_bundle ? "pcb1" : format}, {"remapped", !map_path.empty()}};
    m.seeds() = json::object();
    m.write(default_manifest(manifest, out));
    log.info("converted", {{"in", in}, {"out", out}, {"points", cloud.size()}});
    return kOk;
  }
};

struct PreprocessCmd {
  std::string in, out_dir, layer_config, manifest;
  std::size_t n_points = kDeskBatchPoints;
  double tile_size = kDefaultTileSize;
  std::uint64_t seed = 0;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("preprocess", "Tile a labeled cloud and write one training batch per tile");
    c->add_option("--in,-i", in, "Input PLY")->required();
    c->add_option("--out-dir,-o", out_dir, "Directory for tile_<x>_<y>.pcb1 batches")->required();
    c->add_option("--n-points", n_points, "Points per batch");
    c->add_option("--tile-size", tile_size, "Tile edge in metres");
    c->add_option("--layer-config", layer_config, "LayerConfig JSON (neighbors, decimation)");
    c->add_option("--seed", seed, "Resampling seed");
    c->add_option("--manifest", manifest, "Manifest path (default <out-dir>/manifest.json)");
  }

  int run(const CLI::App&, const Logger& log) {
    Manifest m("preprocess");
    const PointCloud cloud = load_cloud(in, m);
    LayerConfig cfg;
    if (!layer_config.empty()) cfg = load_json_as<LayerConfig>(layer_config, m, "layer config");
    cfg.validate();
    const TileGrid grid = tile(cloud, tile_size);
    std::uint64_t ordinal = 0;
    for (const auto& [key, idx] : grid.tiles) {
      const Batch b = make_batch(select(cloud, idx), n_points, cfg, derive_seed(seed, ordinal++), key);
      const auto path = (fs::path(out_dir) / ("tile_" + std::to_string(key.first) + "_" + std::to_string(key.second) + ".pcb1")).string();
      write_output(m, path, batch_to_bundle(b).serialize());
    }
    m.parameters() = {{"n_points", n_points}, {"tile_size", tile_size}, {"layer_config", cfg}};
    m.seeds() = {{"resample", seed}};
    m.write(manifest.empty() ? (fs::path(out_dir) / "manifest.json").string() : manifest);
    log.info("wrote batches", {{"tiles", grid.tiles.size()}, {"dir", out_dir}});
    return kOk;
  }
};

std::vector<Batch> load_batches(const std::vector<std::string>& paths, Manifest& m) {
  std::vector<Batch> out;
  for (const auto& p : expand_bundles(paths)) {
    const auto bytes = read_file(p);
    m.input(p, bytes);
    out.push_back(batch_from_bundle(ArrayBundle::parse(bytes)));
  }
  return out;
}

void check_batches(const std::vector<Batch>& batches, const ModelParams& params, const char* what) {
  if (batches.empty()) throw ValidationError(std::string(what) + ": no batches given");
  for (const auto& b : batches) {
    if (static_cast<int>(b.graphs.size()) != params.config.num_layers || b.graphs.front().k != params.config.k) {
      throw ValidationError(std::string(what) + ": batch levels do not match the layer config");
    }
    if (b.cloud.schema_name != params.schema.name()) {
      throw ValidationError(std::string(what) + ": batch schema '" + b.cloud.schema_name + "' differs from model schema '" +
                            params.schema.name() + "'");
    }
  }
}

struct TrainCmd {
  std::vector<std::string> train_paths, val_paths;
  std::vector<double> class_weights;
  std::string out, history, layer_config, init, schema, manifest;
  int epochs = 100;
  int patience = 10;
  double lr = AdamConfig{}.lr;
  std::uint64_t seed = 0;
  bool freeze = false;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("train", "Train a model on preprocessed batches");
    c->add_option("--train", train_paths, "Training batch files or directories")->required();
    c->add_option("--val", val_paths, "Validation batch files or directories")->required();
    c->add_option("--out,-o", out, "Output checkpoint (.pcsk)")->required();
    c->add_option("--history", history, "Per-epoch CSV (default <out>.history.csv)");
    c->add_option("--layer-config", layer_config, "LayerConfig JSON for a fresh model");
    c->add_option("--init", init, "Start from this checkpoint instead of a fresh model");
    c->add_option("--schema", schema, "Class schema name or JSON file (default: the batches' schema)");
    c->add_option("--epochs", epochs, "Maximum epochs");
    c->add_option("--patience", patience, "Early-stopping patience in epochs");
    c->add_option("--lr", lr, "Adam learning rate");
    c->add_option("--class-weights", class_weights, "Per-class loss weights (default inverse sqrt frequency)");
    c->add_flag("--freeze-backbone", freeze, "Only update the classification head");
    c->add_option("--seed", seed, "Initialisation / shuffling / dropout seed");
    c->add_option("--manifest", manifest, "Manifest path (default <out>.manifest.json)");
  }

  int run(const CLI::App&, const Logger& log) {
    Manifest m("train");
    const auto tr = load_batches(train_paths, m);
    const auto va = load_batches(val_paths, m);
    if (tr.empty()) throw ValidationError("train: no training batches");
    ModelParams params;
    if (!init.empty()) {
      const auto bytes = read_file(init);
      m.input(init, bytes);
      params = parse_checkpoint(bytes);
      if (!layer_config.empty()) throw ValidationError("train: --layer-config conflicts with --init");
    } else {
      LayerConfig cfg;
      if (!layer_config.empty()) cfg = load_json_as<LayerConfig>(layer_config, m, "layer config");
      const ClassSchema s = load_schema(schema.empty() ? tr.front().cloud.schema_name : schema, &m);
      cfg.num_classes = static_cast<int>(s.class_count());
      params = init_model(cfg, s, derive_seed(seed, 0));
    }
    check_batches(tr, params, "train");
    check_batches(va, params, "train --val");
    TrainConfig tc;
    tc.max_epochs = epochs;
    tc.patience = patience;
    tc.adam.lr = lr;
    tc.seed = seed;
    tc.class_weights = class_weights;
    tc.freeze_backbone = freeze;
    tc.on_epoch = [&](const EpochRecord& r) {
      log.info("epoch", {{"epoch", r.epoch}, {"train_loss", r.train_loss}, {"val_miou", r.val_miou}});
    };
    const TrainResult result = train(tr, va, std::move(params), tc);
    write_output(m, out, serialize_checkpoint(result.best));
    const std::string hist = history.empty() ? out + ".history.csv" : history;
    write_output(m, hist, history_csv(result.history));
    m.parameters() = {{"epochs", epochs},     {"patience", patience},  {"lr", lr},
                      {"freeze_backbone", freeze}, {"class_weights", class_weights},
                      {"layer_config", result.best.config}, {"schema", result.best.schema.name()}};
    m.seeds() = {{"train", seed}, {"init", init.empty() ? json(derive_seed(seed, 0)) : json("checkpoint")}};
    m.write(default_manifest(manifest, out));
    log.info("trained", {{"best_epoch", result.best_epoch}, {"epochs_run", result.history.size()}, {"out", out}});
    return kOk;
  }
};

struct TransferCmd {
  std::string source, schema = "urban5", correspondence, out, manifest;
  std::uint64_t seed = 0;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("transfer", "Re-head a source checkpoint for a target schema");
    c->add_option("--source,-s", source, "Source checkpoint (.pcsk)")->required();
    c->add_option("--schema", schema, "Target schema name or JSON file");
    c->add_option("--correspondence", correspondence,
                  "JSON {target class: source class}; default pairs classes with equal names");
    c->add_option("--out,-o", out, "Output checkpoint")->required();
    c->add_option("--seed", seed, "Seed for re-initialised head columns");
    c->add_option("--manifest", manifest, "Manifest path (default <out>.manifest.json)");
  }

  int run(const CLI::App&, const Logger& log) {
    Manifest m("transfer");
    const auto bytes = read_file(source);
    m.input(source, bytes);
    const ModelParams src = parse_checkpoint(bytes);
    const ClassSchema target = load_schema(schema, &m);
    Correspondence corr;
    if (!correspondence.empty()) {
      const auto cb = read_file(correspondence);
      m.input(correspondence, cb);
      corr = load_correspondence_json(cb, target, src.schema);
    } else {
      for (std::size_t t = 0; t < target.class_count(); ++t) {
        if (auto s = src.schema.find(target.class_name(static_cast<Label>(t)))) corr[static_cast<Label>(t)] = *s;
      }
    }
    const ModelParams dst = init_from_source(src, target, corr, seed);
    write_output(m, out, serialize_checkpoint(dst));
    m.parameters() = {{"schema", target.name()}, {"correspondence", dst.provenance.at("correspondence")}};
    m.seeds() = {{"head", seed}};
    m.write(default_manifest(manifest, out));
    log.info("transferred", {{"mapped_classes", corr.size()}, {"out", out}});
    return kOk;
  }
};

struct PredictCmd {
  std::string model, in, out, format = "binary", manifest;
  PredictSettings settings;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("predict", "Label every point of a cloud");
    c->add_option("--model,-m", model, "Checkpoint (.pcsk)")->required();
    c->add_option("--in,-i", in, "Input PLY")->required();
    c->add_option("--out,-o", out, "Output PLY with predicted labels")->required();
    c->add_option("--n-points", settings.n_points, "Points per inference chunk");
    c->add_option("--tile-size", settings.tile_size, "Tile edge in metres");
    c->add_option("--seed", settings.seed, "Chunking seed");
    c->add_option("--format", format, "binary or ascii");
    c->add_option("--manifest", manifest, "Manifest path (default <out>.manifest.json)");
  }

  int run(const CLI::App&, const Logger& log) {
    Manifest m("predict");
    const auto bytes = read_file(model);
    m.input(model, bytes);
    const ModelParams params = parse_checkpoint(bytes);
    const PointCloud cloud = load_cloud(in, m);
    const PointCloud pred = predict_labels(cloud, params, settings);
    write_output(m, out, write_ply(pred, parse_format(format)));
    m.parameters() = {{"n_points", settings.n_points}, {"tile_size", settings.tile_size}, {"format", format}};
    m.seeds() = {{"predict", settings.seed}};
    m.write(default_manifest(manifest, out));
    log.info("predicted", {{"points", pred.size()}, {"out", out}});
    return kOk;
  }
};

struct PostprocessCmd {
  std::string in, rules, out, report, schema, format = "binary", manifest;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("postprocess", "Run an ordered filter pipeline over a labeled cloud");
    c->add_option("--in,-i", in, "Input PLY")->required();
    c->add_option("--rules,-r", rules, "Filter pipeline JSON")->required();
    c->add_option("--out,-o", out, "Filtered PLY")->required();
    c->add_option("--report", report, "FilterReport JSON (default <out>.report.json)");
    c->add_option("--schema", schema, "Schema for class names in rules (default: the cloud's)");
    c->add_option("--format", format, "binary or ascii");
    c->add_option("--manifest", manifest, "Manifest path (default <out>.manifest.json)");
  }

  int run(const CLI::App&, const Logger& log) {
    Manifest m("postprocess");
    const PointCloud cloud = load_cloud(in, m);
    const auto rb = read_file(rules);
    m.input(rules, rb);
    const ClassSchema s = load_schema(schema.empty() ? cloud.schema_name : schema, &m);
    const auto [filtered, reports] = run_filter_pipeline(cloud, parse_json(rb, "filter pipeline"), s);
    write_output(m, out, write_ply(filtered, parse_format(format)));
    json rep = reports;
    write_output(m, report.empty() ? out + ".report.json" : report, rep.dump(2) + "\n");
    m.parameters() = {{"schema", s.name()}, {"format", format}};
    m.seeds() = json::object();
    m.write(default_manifest(manifest, out));
    log.info("filtered", {{"points_in", cloud.size()}, {"points_out", filtered.size()}, {"steps", reports.size()}});
    return kOk;
  }
};

struct EvaluateCmd {
  std::string truth, pred, out, schema, manifest;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("evaluate", "Per-class IoU / F1 / accuracy of predicted labels");
    c->add_option("--truth,-t", truth, "Ground-truth PLY")->required();
    c->add_option("--pred,-p", pred, "Predicted PLY (same point order)")->required();
    c->add_option("--out,-o", out, "MetricsReport JSON")->required();
    c->add_option("--schema", schema, "Schema name or JSON file (default: the truth cloud's)");
    c->add_option("--manifest", manifest, "Manifest path (default <out>.manifest.json)");
  }

  int run(const CLI::App&, const Logger& log) {
    Manifest m("evaluate");
    const PointCloud t = load_cloud(truth, m);
    const PointCloud p = load_cloud(pred, m);
    if (!t.labels || !p.labels) throw ValidationError("evaluate: both clouds need labels");
    const ClassSchema s = load_schema(schema.empty() ? t.schema_name : schema, &m);
    ConfusionMatrix cm(s.class_count());
    accumulate(cm, *t.labels, *p.labels);
    const MetricsReport r = compute_report(cm, s);
    json j = report_to_json(r);
    j["confusion"] = json::array();
    for (Eigen::Index i = 0; i < cm.counts().rows(); ++i) {
      std::vector<std::uint64_t> row(cm.counts().row(i).begin(), cm.counts().row(i).end());
      j["confusion"].push_back(row);
    }
    write_output(m, out, j.dump(2) + "\n");
    m.parameters() = {{"schema", s.name()}};
    m.seeds() = json::object();
    m.write(default_manifest(manifest, out));
    std::cout << report_to_table(r);
    log.info("evaluated", {{"points", r.total}, {"out", out}});
    return kOk;
  }
};

}  // namespace
}  // namespace urbanseg::cli

int main(int argc, char** argv) {
  using namespace urbanseg;
  using namespace urbanseg::cli;
  CLI::App app{"urbanseg: urban point cloud segmentation pipeline"};
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON config; flags given on the command line win");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(1);
  app.fallthrough();
  int threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  std::string log_format = "text";
  app.add_option("--threads", threads, "Worker thread cap (results do not depend on it)")->check(CLI::PositiveNumber);
  app.add_option("--log-format", log_format, "text or json")->check(CLI::IsMember({"text", "json"}));
  app.set_version_flag("--version", kToolVersion);

  SynthCmd synth;
  ConvertCmd convert;
  PreprocessCmd preprocess;
  TrainCmd train_cmd;
  TransferCmd transfer;
  PredictCmd predict;
  PostprocessCmd postprocess;
  EvaluateCmd evaluate;
  synth.add(app);
  convert.add(app);
  preprocess.add(app);
  train_cmd.add(app);
  transfer.add(app);
  predict.add(app);
  postprocess.add(app);
  evaluate.add(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidation;
  }

  Logger log{log_format == "json"};
  set_max_threads(threads);
  const std::string name = app.get_subcommands().front()->get_name();
  try {
    if (name == "synth") return synth.run(app, log);
    if (name == "convert") return convert.run(app, log);
    if (name == "preprocess") return preprocess.run(app, log);
    if (name == "train") return train_cmd.run(app, log);
    if (name == "transfer") return transfer.run(app, log);
    if (name == "predict") return predict.run(app, log);
    if (name == "postprocess") return postprocess.run(app, log);
    if (name == "evaluate") return evaluate.run(app, log);
  } catch (const ValidationError& e) {
    log.error(e.what());
    return kValidation;
  } catch (const FormatError& e) {
    log.error(e.what());
    return kFormat;
  } catch (const IoError& e) {
    log.error(e.what());
    return kFormat;
  } catch (const std::filesystem::filesystem_error& e) {
    log.error(e.what());
    return kFormat;
  }
  return kValidation;
}
