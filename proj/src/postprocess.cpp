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

#include "urbanseg/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <set>
#include <unordered_map>

#include "urbanseg/errors.hpp"
#include "urbanseg/parallel.hpp"

namespace urbanseg {

namespace {

std::map<Label, std::int64_t> label_counts(const PointCloud& c) {
  std::map<Label, std::int64_t> out;
  if (c.labels) {
    for (Label l : *c.labels) ++out[l];
  }
  return out;
}

FilterReport make_report(std::string name, const PointCloud& in, const PointCloud& out, std::size_t relabeled) {
  FilterReport r;
  r.filter = std::move(name);
  r.points_in = static_cast<std::size_t>(in.size());
  r.points_out = static_cast<std::size_t>(out.size());
  r.points_removed = r.points_in - r.points_out;
  r.points_relabeled = relabeled;
  auto before = label_counts(in);
  auto after = label_counts(out);
  for (const auto& [l, n] : before) r.class_deltas[l] -= n;
  for (const auto& [l, n] : after) r.class_deltas[l] += n;
  return r;
}

FilterResult keep_where(std::string name, const PointCloud& cloud, const std::vector<bool>& keep) {
  PointCloud out = select_mask(cloud, keep);
  FilterReport r = make_report(std::move(name), cloud, out, 0);
  return {std::move(out), std::move(r)};
}

void require_labels(const PointCloud& cloud, const char* who) {
  if (!cloud.labels) throw ValidationError(std::string(who) + ": cloud has no labels");
}

}  // namespace

void to_json(nlohmann::json& j, const FilterReport& r) {
  nlohmann::json deltas = nlohmann::json::object();
  for (const auto& [l, d] : r.class_deltas) deltas[std::to_string(l)] = d;
  j = {{"filter", r.filter},
       {"points_in", r.points_in},
       {"points_out", r.points_out},
       {"points_removed", r.points_removed},
       {"points_relabeled", r.points_relabeled},
       {"class_deltas", deltas}};
}

FilterResult statistical_outlier_removal(const PointCloud& cloud, int k, double std_ratio) {
  if (k < 1) throw ValidationError("statistical_outlier_removal: k must be >= 1");
  if (!(std_ratio > 0.0)) throw ValidationError("statistical_outlier_removal: std_ratio must be > 0");
  const auto n = static_cast<std::size_t>(cloud.size());
  if (n <= static_cast<std::size_t>(k)) {
    throw ValidationError("statistical_outlier_removal: need more than k points");
  }
  const NeighborGraph g = knn(build_index(cloud.positions), k, SelfPolicy::kExclude);
  std::vector<double> mean_dist(n);
  parallel_for(n, [&](std::size_t i) {
    double s = 0.0;
    for (int j = 0; j < k; ++j) s += g.distances(static_cast<Eigen::Index>(i), j);
    mean_dist[i] = s / k;
  });
  double mu = 0.0;
  for (double d : mean_dist) mu += d;
  mu /= static_cast<double>(n);
  double var = 0.0;
  for (double d : mean_dist) var += (d - mu) * (d - mu);
  const double sigma = std::sqrt(var / static_cast<double>(n));
  const double cutoff = mu + std_ratio * sigma;
  std::vector<bool> keep(n);
  for (std::size_t i = 0; i < n; ++i) keep[i] = !(mean_dist[i] > cutoff);
  return keep_where("statistical", cloud, keep);
}

FilterResult radius_outlier_removal(const PointCloud& cloud, double radius, int min_neighbors) {
  if (!(radius > 0.0)) throw ValidationError("radius_outlier_removal: radius must be > 0");
  if (min_neighbors < 1) throw ValidationError("radius_outlier_removal: min_neighbors must be >= 1");
  const auto n = static_cast<std::size_t>(cloud.size());
  if (n == 0) return keep_where("radius", cloud, {});
  const KdTree tree = build_index(cloud.positions);
  std::vector<char> keep_c(n);
  parallel_for(n, [&](std::size_t i) {
    std::vector<std::pair<double, std::int32_t>> found;
    tree.within(cloud.positions.row(static_cast<Eigen::Index>(i)).transpose(), radius * radius,
                static_cast<std::int64_t>(i), found);
    keep_c[i] = found.size() >= static_cast<std::size_t>(min_neighbors);
  });
  return keep_where("radius", cloud, std::vector<bool>(keep_c.begin(), keep_c.end()));
}

FilterResult voxel_downsample(const PointCloud& cloud, double voxel_size) {
  if (!(voxel_size > 0.0)) throw ValidationError("voxel_downsample: voxel_size must be > 0");
  const Eigen::Index n = cloud.size();
  struct KeyHash {
    std::size_t operator()(const std::array<std::int64_t, 3>& k) const {
      std::size_t h = 1469598103934665603ull;
      for (auto v : k) h = (h ^ static_cast<std::size_t>(v)) * 1099511628211ull;
      return h;
    }
  };
  std::unordered_map<std::array<std::int64_t, 3>, std::size_t, KeyHash> slot;
  std::vector<std::vector<Eigen::Index>> members;
  for (Eigen::Index i = 0; i < n; ++i) {
    std::array<std::int64_t, 3> key{};
    for (int a = 0; a < 3; ++a) key[a] = static_cast<std::int64_t>(std::floor(cloud.positions(i, a) / voxel_size));
    auto [it, fresh] = slot.try_emplace(key, members.size());
    if (fresh) members.emplace_back();
    members[it->second].push_back(i);
  }
  const auto m = static_cast<Eigen::Index>(members.size());
  PointCloud out;
  out.schema_name = cloud.schema_name;
  out.positions.resize(m, 3);
  if (cloud.colors) out.colors = Colors(m, 3);
  if (cloud.labels) out.labels = Labels(static_cast<std::size_t>(m));
  parallel_for(members.size(), [&](std::size_t v) {
    const auto& idx = members[v];
    const auto r = static_cast<Eigen::Index>(v);
    Eigen::Vector3d sum = Eigen::Vector3d::Zero();
    Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
    Eigen::Vector3d hi = -lo;
    for (auto i : idx) {
      const Eigen::Vector3d p = cloud.positions.row(i).transpose();
      sum += p;
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    // Rounding can push the mean a hair outside the members' box.
    out.positions.row(r) = (sum / static_cast<double>(idx.size())).cwiseMax(lo).cwiseMin(hi).transpose();
    if (cloud.colors) {
      for (int c = 0; c < 3; ++c) {
        double s = 0.0;
        for (auto i : idx) s += (*cloud.colors)(i, c);
        (*out.colors)(r, c) = static_cast<std::uint8_t>(std::lround(s / static_cast<double>(idx.size())));
      }
    }
    if (cloud.labels) {
      std::map<Label, std::size_t> votes;
      for (auto i : idx) ++votes[(*cloud.labels)[static_cast<std::size_t>(i)]];
      Label best = votes.begin()->first;
      std::size_t best_n = 0;
      for (const auto& [l, c] : votes) {
        if (c > best_n) {
          best = l;
          best_n = c;
        }
      }
      (*out.labels)[v] = best;
    }
  });
  FilterReport rep = make_report("voxel", cloud, out, 0);
  return {std::move(out), std::move(rep)};
}

FilterResult morphological_label_filter(const PointCloud& cloud, const NeighborGraph& graph, Morphology mode,
                                        Label target, int threshold) {
  require_labels(cloud, "morphological_label_filter");
  if (graph.rows() != cloud.size()) throw ValidationError("morphological_label_filter: graph size mismatch");
  if (threshold < 1 || threshold > graph.k) {
    throw ValidationError("morphological_label_filter: threshold must be in [1, k]");
  }
  const auto n = static_cast<std::size_t>(cloud.size());
  const Labels& in = *cloud.labels;
  for (std::size_t i = 0; i < n; ++i) {
    for (int j = 0; j < graph.k; ++j) {
      const auto nb = graph.indices(static_cast<Eigen::Index>(i), j);
      if (nb < 0 || static_cast<std::size_t>(nb) >= n) {
        throw ValidationError("morphological_label_filter: neighbor index out of range");
      }
    }
  }
  Labels next = in;
  parallel_for(n, [&](std::size_t i) {
    const auto row = static_cast<Eigen::Index>(i);
    int hits = 0;
    for (int j = 0; j < graph.k; ++j) hits += in[static_cast<std::size_t>(graph.indices(row, j))] == target;
    if (mode == Morphology::kDilate) {
      if (hits >= threshold) next[i] = target;
      return;
    }
    if (in[i] != target || hits >= threshold) return;
    std::map<Label, int> votes;
    for (int j = 0; j < graph.k; ++j) {
      const Label l = in[static_cast<std::size_t>(graph.indices(row, j))];
      if (l != target) ++votes[l];
    }
    int best_n = 0;
    for (const auto& [l, c] : votes) {
      if (c > best_n) {
        next[i] = l;
        best_n = c;
      }
    }
  });
  std::size_t changed = 0;
  for (std::size_t i = 0; i < n; ++i) changed += next[i] != in[i];
  PointCloud out = cloud;
  out.labels = std::move(next);
  FilterReport rep = make_report(mode == Morphology::kErode ? "erode" : "dilate", cloud, out, changed);
  return {std::move(out), std::move(rep)};
}

FilterResult morphological_label_filter(const PointCloud& cloud, int k, Morphology mode, Label target,
                                        int threshold) {
  require_labels(cloud, "morphological_label_filter");
  if (k < 1 || k >= cloud.size()) throw ValidationError("morphological_label_filter: need 1 <= k < N");
  return morphological_label_filter(cloud, knn(build_index(cloud.positions), k, SelfPolicy::kExclude), mode,
                                    target, threshold);
}

GroundModel::GroundModel(double cell_size, Eigen::Vector2d origin, Eigen::Index nx, Eigen::Index ny,
                         Eigen::MatrixXd elevations)
    : cell_size_(cell_size), origin_(std::move(origin)), elevations_(std::move(elevations)) {
  if (!(cell_size > 0.0)) throw ValidationError("GroundModel: cell_size must be > 0");
  if (elevations_.rows() != nx || elevations_.cols() != ny || nx < 1 || ny < 1) {
    throw ValidationError("GroundModel: grid shape mismatch");
  }
  for (Eigen::Index x = 0; x < nx; ++x) {
    for (Eigen::Index y = 0; y < ny; ++y) {
      const double e = elevations_(x, y);
      if (std::isnan(e)) continue;
      if (!std::isfinite(e)) throw ValidationError("GroundModel: non-finite elevation");
      filled_.emplace_back(x, y);
      filled_elevation_.push_back(e);
    }
  }
  if (filled_.empty()) throw ValidationError("GroundModel: no non-empty cells");
  Positions centers(static_cast<Eigen::Index>(filled_.size()), 3);
  for (std::size_t f = 0; f < filled_.size(); ++f) {
    centers.row(static_cast<Eigen::Index>(f)) << static_cast<double>(filled_[f].first) + 0.5,
        static_cast<double>(filled_[f].second) + 0.5, 0.0;
  }
  Positions cells(nx * ny, 3);
  for (Eigen::Index x = 0; x < nx; ++x) {
    for (Eigen::Index y = 0; y < ny; ++y) cells.row(x * ny + y) << static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5, 0.0;
  }
  const NeighborGraph g = knn(build_index(centers), cells, 1);
  fallback_.assign(g.indices.data(), g.indices.data() + g.indices.size());
}

double GroundModel::elevation(double x, double y) const {
  const double fx = (x - origin_.x()) / cell_size_;
  const double fy = (y - origin_.y()) / cell_size_;
  const Eigen::Index nx = elevations_.rows();
  const Eigen::Index ny = elevations_.cols();
  const double ix = std::floor(fx);
  const double iy = std::floor(fy);
  if (ix >= 0 && iy >= 0 && ix < static_cast<double>(nx) && iy < static_cast<double>(ny)) {
    const auto cx = static_cast<Eigen::Index>(ix);
    const auto cy = static_cast<Eigen::Index>(iy);
    const double e = elevations_(cx, cy);
    if (!std::isnan(e)) return e;
    return filled_elevation_[static_cast<std::size_t>(fallback_[static_cast<std::size_t>(cx * ny + cy)])];
  }
  // Outside the grid: nearest non-empty cell center, in cell units.
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_f = 0;
  for (std::size_t f = 0; f < filled_.size(); ++f) {
    const double dx = static_cast<double>(filled_[f].first) + 0.5 - fx;
    const double dy = static_cast<double>(filled_[f].second) + 0.5 - fy;
    const double d = dx * dx + dy * dy;
    if (d < best) {
      best = d;
      best_f = f;
    }
  }
  return filled_elevation_[best_f];
}

GroundModel build_ground_model(const PointCloud& cloud, double cell_size, double percentile) {
  if (cloud.empty()) throw ValidationError("build_ground_model: empty cloud");
  if (!(cell_size > 0.0)) throw ValidationError("build_ground_model: cell_size must be > 0");
  if (!(percentile >= 0.0 && percentile <= 100.0)) {
    throw ValidationError("build_ground_model: percentile must be in [0, 100]");
  }
  const Eigen::Vector2d origin = cloud.positions.leftCols<2>().colwise().minCoeff().transpose();
  const Eigen::Vector2d extent = cloud.positions.leftCols<2>().colwise().maxCoeff().transpose() - origin;
  const auto nx = static_cast<Eigen::Index>(std::floor(extent.x() / cell_size)) + 1;
  const auto ny = static_cast<Eigen::Index>(std::floor(extent.y() / cell_size)) + 1;
  std::vector<std::vector<double>> cells(static_cast<std::size_t>(nx * ny));
  for (Eigen::Index i = 0; i < cloud.size(); ++i) {
    const auto cx = std::min(nx - 1, static_cast<Eigen::Index>(std::floor((cloud.positions(i, 0) - origin.x()) / cell_size)));
    const auto cy = std::min(ny - 1, static_cast<Eigen::Index>(std::floor((cloud.positions(i, 1) - origin.y()) / cell_size)));
    cells[static_cast<std::size_t>(cx * ny + cy)].push_back(cloud.positions(i, 2));
  }
  Eigen::MatrixXd elev = Eigen::MatrixXd::Constant(nx, ny, std::numeric_limits<double>::quiet_NaN());
  for (Eigen::Index x = 0; x < nx; ++x) {
    for (Eigen::Index y = 0; y < ny; ++y) {
      auto& z = cells[static_cast<std::size_t>(x * ny + y)];
      if (z.empty()) continue;
      std::sort(z.begin(), z.end());
      const double pos = percentile / 100.0 * static_cast<double>(z.size() - 1);
      const auto lo = static_cast<std::size_t>(std::floor(pos));
      const std::size_t hi = std::min(lo + 1, z.size() - 1);
      const double frac = pos - static_cast<double>(lo);
      elev(x, y) = frac == 0.0 ? z[lo] : z[lo] + frac * (z[hi] - z[lo]);
    }
  }
  return GroundModel(cell_size, origin, nx, ny, std::move(elev));
}

std::vector<HeightRule> height_rules_from_json(const nlohmann::json& j, const ClassSchema& schema) {
  if (!j.is_array()) throw ValidationError("height rules: expected an array");
  std::vector<HeightRule> rules;
  for (const auto& r : j) {
    if (!r.is_object()) throw ValidationError("height rules: each rule must be an object");
    for (const auto& [key, _] : r.items()) {
      if (key != "class" && key != "min_height" && key != "max_height" && key != "action" && key != "to") {
        throw ValidationError("height rules: unknown key '" + key + "'");
      }
    }
    HeightRule h;
    h.label = schema.id_of(r.at("class").get<std::string>());
    if (r.contains("min_height")) h.min_height = r.at("min_height").get<double>();
    if (r.contains("max_height")) h.max_height = r.at("max_height").get<double>();
    if (!(h.min_height < h.max_height)) throw ValidationError("height rules: min_height must be < max_height");
    const auto action = r.value("action", std::string("relabel"));
    if (action == "remove") {
      h.action = HeightRule::Action::kRemove;
      if (r.contains("to")) throw ValidationError("height rules: 'to' is only valid with action relabel");
    } else if (action == "relabel") {
      h.action = HeightRule::Action::kRelabel;
      h.relabel_to = schema.id_of(r.at("to").get<std::string>());
    } else {
      throw ValidationError("height rules: action must be 'relabel' or 'remove'");
    }
    rules.push_back(h);
  }
  return rules;
}

FilterResult height_filter(const PointCloud& cloud, const GroundModel& ground, const std::vector<HeightRule>& rules) {
  require_labels(cloud, "height_filter");
  const auto n = static_cast<std::size_t>(cloud.size());
  const Labels& in = *cloud.labels;
  Labels next = in;
  std::vector<char> keep(n, 1);
  parallel_for(n, [&](std::size_t i) {
    const auto r = static_cast<Eigen::Index>(i);
    const double h = cloud.positions(r, 2) - ground.elevation(cloud.positions(r, 0), cloud.positions(r, 1));
    for (const auto& rule : rules) {
      if (in[i] != rule.label || !(h >= rule.min_height && h < rule.max_height)) continue;
      if (rule.action == HeightRule::Action::kRemove) {
        keep[i] = 0;
      } else {
        next[i] = rule.relabel_to;
      }
      break;
    }
  });
  std::size_t changed = 0;
  for (std::size_t i = 0; i < n; ++i) changed += keep[i] && next[i] != in[i];
  PointCloud relabeled = cloud;
  relabeled.labels = std::move(next);
  PointCloud out = select_mask(relabeled, std::vector<bool>(keep.begin(), keep.end()));
  FilterReport rep = make_report("height", cloud, out, changed);
  return {std::move(out), std::move(rep)};
}

std::vector<double> local_height_variation(const PointCloud& cloud, double radius) {
  if (!(radius > 0.0)) throw ValidationError("local_height_variation: radius must be > 0");
  const auto n = static_cast<std::size_t>(cloud.size());
  std::vector<double> out(n, 0.0);
  if (n == 0) return out;
  const KdTree tree = build_index(cloud.positions);
  parallel_for(n, [&](std::size_t i) {
    std::vector<std::pair<double, std::int32_t>> found;
    tree.within(cloud.positions.row(static_cast<Eigen::Index>(i)).transpose(), radius * radius, -1, found);
    double lo = cloud.positions(static_cast<Eigen::Index>(i), 2);
    double hi = lo;
    for (const auto& [_, j] : found) {
      lo = std::min(lo, cloud.positions(j, 2));
      hi = std::max(hi, cloud.positions(j, 2));
    }
    out[i] = hi - lo;
  });
  return out;
}

namespace {

void check_keys(const nlohmann::json& step, std::initializer_list<const char*> allowed) {
  for (const auto& [key, _] : step.items()) {
    if (key == "filter") continue;
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw ValidationError("filter pipeline: unknown key '" + key + "' for filter '" +
                            step.at("filter").get<std::string>() + "'");
    }
  }
}

}  // namespace

std::pair<PointCloud, std::vector<FilterReport>> run_filter_pipeline(const PointCloud& cloud,
                                                                     const nlohmann::json& pipeline,
                                                                     const ClassSchema& schema) {
  if (!pipeline.is_object() || !pipeline.contains("steps") || !pipeline.at("steps").is_array()) {
    throw ValidationError("filter pipeline: expected {\"steps\": [...]}");
  }
  for (const auto& [key, _] : pipeline.items()) {
    if (key != "steps") throw ValidationError("filter pipeline: unknown key '" + key + "'");
  }
  PointCloud current = cloud;
  std::vector<FilterReport> reports;
  try {
    for (const auto& step : pipeline.at("steps")) {
      const auto name = step.at("filter").get<std::string>();
      FilterResult r;
      if (name == "statistical") {
        check_keys(step, {"k", "std_ratio"});
        r = statistical_outlier_removal(current, step.value("k", 16), step.value("std_ratio", 1.0));
      } else if (name == "radius") {
        check_keys(step, {"radius", "min_neighbors"});
        r = radius_outlier_removal(current, step.value("radius", 1.0), step.value("min_neighbors", 4));
      } else if (name == "voxel") {
        check_keys(step, {"size"});
        r = voxel_downsample(current, step.value("size", 0.5));
      } else if (name == "morphology") {
        check_keys(step, {"mode", "class", "threshold", "k"});
        const auto mode = step.at("mode").get<std::string>();
        if (mode != "erode" && mode != "dilate") throw ValidationError("filter pipeline: mode must be erode|dilate");
        r = morphological_label_filter(current, step.value("k", 16),
                                       mode == "erode" ? Morphology::kErode : Morphology::kDilate,
                                       schema.id_of(step.at("class").get<std::string>()), step.value("threshold", 8));
      } else if (name == "height") {
        check_keys(step, {"cell_size", "percentile", "rules"});
        const GroundModel ground =
            build_ground_model(current, step.value("cell_size", 2.0), step.value("percentile", 5.0));
        r = height_filter(current, ground, height_rules_from_json(step.at("rules"), schema));
      } else {
        throw ValidationError("filter pipeline: unknown filter '" + name + "'");
      }
      current = std::move(r.first);
      reports.push_back(std::move(r.second));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("filter pipeline: ") + e.what());
  }
  return {std::move(current), std::move(reports)};
}

}  // namespace urbanseg
