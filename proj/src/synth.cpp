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

#include "urbanseg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "urbanseg/errors.hpp"
#include "urbanseg/preprocess.hpp"

namespace urbanseg {

namespace {

void check_range(const Range& r, const char* what, bool allow_zero = false) {
  if (!(r.min <= r.max) || !std::isfinite(r.min) || !std::isfinite(r.max) || (allow_zero ? r.min < 0 : r.min <= 0)) {
    throw ValidationError(std::string("scene spec: bad range for ") + what);
  }
}

}  // namespace

void SceneSpec::validate() const {
  auto positive = [](double v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError(std::string("scene spec: ") + what + " must be positive");
  };
  positive(extent, "extent");
  positive(ground_density, "ground_density");
  positive(building_density, "building_density");
  positive(vegetation_density, "vegetation_density");
  positive(road_density, "road_density");
  positive(water_density, "water_density");
  positive(object_density, "object_density");
  positive(road_width, "road_width");
  if (building_count < 0 || tree_count < 0 || road_count < 0 || car_count < 0 || pole_count < 0) {
    throw ValidationError("scene spec: counts must be non-negative");
  }
  check_range(building_footprint, "building_footprint");
  check_range(building_height, "building_height");
  check_range(tree_radius, "tree_radius");
  check_range(trunk_height, "trunk_height", true);
  check_range(water_size, "water_size");
  if (!(ground_noise >= 0.0) || !(color_noise >= 0.0)) throw ValidationError("scene spec: noise must be >= 0");
  if (water && !(water_level < -3 * ground_noise)) {
    throw ValidationError("scene spec: water_level must lie below the ground surface");
  }
  if (road_width >= extent) throw ValidationError("scene spec: road_width must be smaller than extent");
}

void to_json(nlohmann::json& j, const SceneSpec& s) {
  auto range = [](const Range& r) { return nlohmann::json::array({r.min, r.max}); };
  j = {{"extent", s.extent},
       {"ground_density", s.ground_density},
       {"building_density", s.building_density},
       {"vegetation_density", s.vegetation_density},
       {"road_density", s.road_density},
       {"water_density", s.water_density},
       {"building_count", s.building_count},
       {"building_footprint", range(s.building_footprint)},
       {"building_height", range(s.building_height)},
       {"tree_count", s.tree_count},
       {"tree_radius", range(s.tree_radius)},
       {"trunk_height", range(s.trunk_height)},
       {"road_width", s.road_width},
       {"road_count", s.road_count},
       {"water", s.water},
       {"water_size", range(s.water_size)},
       {"water_level", s.water_level},
       {"ground_noise", s.ground_noise},
       {"color_noise", s.color_noise},
       {"car_count", s.car_count},
       {"pole_count", s.pole_count},
       {"object_density", s.object_density},
       {"class_colors", s.class_colors},
       {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, SceneSpec& s) {
  if (!j.is_object()) throw ValidationError("scene spec: expected a JSON object");
  nlohmann::json defaults;
  to_json(defaults, s);
  for (const auto& [key, _] : j.items()) {
    if (!defaults.contains(key)) throw ValidationError("scene spec: unknown key '" + key + "'");
  }
  auto range = [&](const char* key, Range& r) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (!v.is_array() || v.size() != 2) throw ValidationError(std::string("scene spec: ") + key + " must be [min, max]");
    r = {v[0].get<double>(), v[1].get<double>()};
  };
  try {
    s.extent = j.value("extent", s.extent);
    s.ground_density = j.value("ground_density", s.ground_density);
    s.building_density = j.value("building_density", s.building_density);
    s.vegetation_density = j.value("vegetation_density", s.vegetation_density);
    s.road_density = j.value("road_density", s.road_density);
    s.water_density = j.value("water_density", s.water_density);
    s.building_count = j.value("building_count", s.building_count);
    range("building_footprint", s.building_footprint);
    range("building_height", s.building_height);
    s.tree_count = j.value("tree_count", s.tree_count);
    range("tree_radius", s.tree_radius);
    range("trunk_height", s.trunk_height);
    s.road_width = j.value("road_width", s.road_width);
    s.road_count = j.value("road_count", s.road_count);
    s.water = j.value("water", s.water);
    range("water_size", s.water_size);
    s.water_level = j.value("water_level", s.water_level);
    s.ground_noise = j.value("ground_noise", s.ground_noise);
    s.color_noise = j.value("color_noise", s.color_noise);
    s.car_count = j.value("car_count", s.car_count);
    s.pole_count = j.value("pole_count", s.pole_count);
    s.object_density = j.value("object_density", s.object_density);
    s.class_colors = j.value("class_colors", s.class_colors);
    s.seed = j.value("seed", s.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("scene spec: ") + e.what());
  }
}

namespace {

using Box = SceneLayout::Box;

// Surface kinds before they are mapped onto a schema.
enum Kind { kGround, kVegetation, kRoof, kWall, kRoad, kCar, kPole, kWater, kKindCount };

constexpr std::array<const char*, kKindCount> kSourceNames{"Ground", "Vegetation", "Building", "Wall",
                                                           "Road",   "Car",        "Pole",     "Water"};

bool overlaps(const Box& a, const Box& b, double margin) {
  return a.x0 - margin < b.x1 && b.x0 - margin < a.x1 && a.y0 - margin < b.y1 && b.y0 - margin < a.y1;
}

bool inside(const Box& b, double x, double y) { return x >= b.x0 && x < b.x1 && y >= b.y0 && y < b.y1; }

double box_distance(const Box& b, double x, double y) {
  const double dx = std::max({b.x0 - x, 0.0, x - b.x1});
  const double dy = std::max({b.y0 - y, 0.0, y - b.y1});
  return std::hypot(dx, dy);
}

template <typename Fn>
void place(int count, const char* what, Fn&& try_once) {
  for (int i = 0; i < count; ++i) {
    int attempts = 0;
    while (!try_once()) {
      if (++attempts > 2000) {
        throw ValidationError(std::string("scene spec: could not place ") + what + " " + std::to_string(i) +
                              "; scene too crowded");
      }
    }
  }
}

struct Extras {
  std::vector<Box> cars;
  std::vector<SceneLayout::Tree> poles;  // x, y, radius, height in vertical_radius
};

Extras extra_layout(const SceneSpec& spec, const SceneLayout& layout) {
  Extras ex;
  if (layout.roads.empty()) return ex;
  std::mt19937_64 rng(derive_seed(spec.seed, 3));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  place(spec.car_count, "car", [&] {
    const Box& road = layout.roads[static_cast<std::size_t>(u(rng) * static_cast<double>(layout.roads.size()))];
    const bool horizontal = road.x1 - road.x0 > road.y1 - road.y0;
    const double len = 4.5, wid = 1.8;
    const double cx = road.x0 + u(rng) * (road.x1 - road.x0);
    const double cy = road.y0 + u(rng) * (road.y1 - road.y0);
    Box car = horizontal ? Box{cx - len / 2, cy - wid / 2, cx + len / 2, cy + wid / 2, 1.5}
                         : Box{cx - wid / 2, cy - len / 2, cx + wid / 2, cy + len / 2, 1.5};
    if (car.x0 < road.x0 || car.x1 > road.x1 || car.y0 < road.y0 || car.y1 > road.y1) return false;
    for (const auto& c : ex.cars) {
      if (overlaps(c, car, 0.5)) return false;
    }
    ex.cars.push_back(car);
    return true;
  });
  place(spec.pole_count, "pole", [&] {
    const Box& road = layout.roads[static_cast<std::size_t>(u(rng) * static_cast<double>(layout.roads.size()))];
    const bool horizontal = road.x1 - road.x0 > road.y1 - road.y0;
    const double side = u(rng) < 0.5 ? -0.6 : 0.6;
    double x, y;
    if (horizontal) {
      x = road.x0 + u(rng) * (road.x1 - road.x0);
      y = side < 0 ? road.y0 + side : road.y1 + side;
    } else {
      y = road.y0 + u(rng) * (road.y1 - road.y0);
      x = side < 0 ? road.x0 + side : road.x1 + side;
    }
    if (x < 0.5 || y < 0.5 || x > spec.extent - 0.5 || y > spec.extent - 0.5) return false;
    for (const auto& r : layout.roads) {
      if (inside(r, x, y)) return false;
    }
    for (const auto& b : layout.buildings) {
      if (box_distance(b, x, y) < 1.0) return false;
    }
    if (layout.water && box_distance(*layout.water, x, y) < 1.0) return false;
    ex.poles.push_back({x, y, 0.15, 6.0, 0.0});
    return true;
  });
  return ex;
}

struct Emitter {
  const SceneSpec& spec;
  std::mt19937_64 rng;
  std::uniform_real_distribution<double> u{0.0, 1.0};
  std::normal_distribution<double> n{0.0, 1.0};
  std::vector<Eigen::RowVector3d> points;
  std::vector<Kind> kinds;

  std::size_t count_for(double density, double area) { return static_cast<std::size_t>(std::llround(density * area)); }

  void emit(double x, double y, double z, Kind k) {
    points.emplace_back(x, y, z);
    kinds.push_back(k);
  }

  double ground_z() { return spec.ground_noise * n(rng); }

  // Uniform points on an axis-aligned vertical rectangle.
  void wall(double x0, double y0, double x1, double y1, double z0, double z1, double density, Kind k) {
    const double len = std::hypot(x1 - x0, y1 - y0);
    for (std::size_t i = count_for(density, len * (z1 - z0)); i-- > 0;) {
      const double t = u(rng);
      emit(x0 + t * (x1 - x0), y0 + t * (y1 - y0), z0 + u(rng) * (z1 - z0), k);
    }
  }

  void box_shell(const Box& b, double z0, double density, Kind roof, Kind side) {
    const double top = z0 + b.height;
    for (std::size_t i = count_for(density, (b.x1 - b.x0) * (b.y1 - b.y0)); i-- > 0;) {
      emit(b.x0 + u(rng) * (b.x1 - b.x0), b.y0 + u(rng) * (b.y1 - b.y0), top, roof);
    }
    wall(b.x0, b.y0, b.x1, b.y0, z0, top, density, side);
    wall(b.x1, b.y0, b.x1, b.y1, z0, top, density, side);
    wall(b.x1, b.y1, b.x0, b.y1, z0, top, density, side);
    wall(b.x0, b.y1, b.x0, b.y0, z0, top, density, side);
  }
};

// Approximate ellipsoid surface area (Thomsen, p = 1.6075).
double ellipsoid_area(double a, double b, double c) {
  const double p = 1.6075;
  return 4 * std::numbers::pi *
         std::pow((std::pow(a * b, p) + std::pow(a * c, p) + std::pow(b * c, p)) / 3.0, 1.0 / p);
}

std::vector<Rgb> default_palette(bool source) {
  if (source) {
    return {Rgb{110, 100, 80}, Rgb{50, 120, 45},  Rgb{170, 160, 150}, Rgb{150, 140, 135},
            Rgb{60, 60, 65},   Rgb{180, 30, 30}, Rgb{200, 200, 60},  Rgb{35, 75, 140}};
  }
  return {Rgb{110, 100, 80}, Rgb{170, 160, 150}, Rgb{50, 120, 45}, Rgb{60, 60, 65}, Rgb{35, 75, 140}};
}

PointCloud generate(const SceneSpec& spec, bool source, const ClassSchema& schema) {
  spec.validate();
  const SceneLayout layout = scene_layout(spec);
  const double e = spec.extent;
  Emitter em{spec, std::mt19937_64(derive_seed(spec.seed, 2)), {}, {}, {}, {}};

  // Ground over the uncovered part of the square.
  for (std::size_t i = em.count_for(spec.ground_density, e * e); i-- > 0;) {
    const double x = em.u(em.rng) * e, y = em.u(em.rng) * e;
    const double z = em.ground_z();
    bool covered = layout.water && inside(*layout.water, x, y);
    for (const auto& r : layout.roads) covered = covered || inside(r, x, y);
    for (const auto& b : layout.buildings) covered = covered || inside(b, x, y);
    if (!covered) em.emit(x, y, z, kGround);
  }
  for (std::size_t r = 0; r < layout.roads.size(); ++r) {
    const Box& road = layout.roads[r];
    for (std::size_t i = em.count_for(spec.road_density, (road.x1 - road.x0) * (road.y1 - road.y0)); i-- > 0;) {
      const double x = road.x0 + em.u(em.rng) * (road.x1 - road.x0);
      const double y = road.y0 + em.u(em.rng) * (road.y1 - road.y0);
      const double z = em.ground_z();
      bool earlier = false;
      for (std::size_t q = 0; q < r; ++q) earlier = earlier || inside(layout.roads[q], x, y);
      if (!earlier) em.emit(x, y, z, kRoad);
    }
  }
  if (layout.water) {
    const Box& w = *layout.water;
    for (std::size_t i = em.count_for(spec.water_density, (w.x1 - w.x0) * (w.y1 - w.y0)); i-- > 0;) {
      em.emit(w.x0 + em.u(em.rng) * (w.x1 - w.x0), w.y0 + em.u(em.rng) * (w.y1 - w.y0), spec.water_level, kWater);
    }
  }
  for (const auto& b : layout.buildings) em.box_shell(b, 0.0, spec.building_density, kRoof, source ? kWall : kRoof);
  for (const auto& t : layout.trees) {
    const double area = ellipsoid_area(t.radius, t.radius, t.vertical_radius);
    const double cz = t.base + t.vertical_radius;
    for (std::size_t i = em.count_for(spec.vegetation_density, area); i-- > 0;) {
      Eigen::Vector3d d(em.n(em.rng), em.n(em.rng), em.n(em.rng));
      d /= std::max(d.norm(), 1e-12);
      // Slightly fuzzy shell rather than a hard surface.
      const double s = 0.85 + 0.15 * em.u(em.rng);
      em.emit(t.x + s * t.radius * d.x(), t.y + s * t.radius * d.y(), cz + s * t.vertical_radius * d.z(), kVegetation);
    }
  }
  if (source) {
    const Extras ex = extra_layout(spec, layout);
    for (const auto& c : ex.cars) em.box_shell(c, 0.0, spec.object_density, kCar, kCar);
    for (const auto& p : ex.poles) {
      const double h = p.vertical_radius;
      for (std::size_t i = em.count_for(spec.object_density, 2 * std::numbers::pi * p.radius * h); i-- > 0;) {
        const double a = em.u(em.rng) * 2 * std::numbers::pi;
        em.emit(p.x + p.radius * std::cos(a), p.y + p.radius * std::sin(a), em.u(em.rng) * h, kPole);
      }
    }
  }

  // Kind -> schema id.
  std::array<Label, kKindCount> ids{};
  if (source) {
    for (int k = 0; k < kKindCount; ++k) ids[static_cast<std::size_t>(k)] = schema.id_of(kSourceNames[static_cast<std::size_t>(k)]);
  } else {
    ids[kGround] = schema.id_of("Background");
    ids[kRoof] = ids[kWall] = schema.id_of("Building");
    ids[kVegetation] = schema.id_of("Vegetation");
    ids[kRoad] = schema.id_of("Road");
    ids[kWater] = schema.id_of("Water");
  }
  const std::vector<Rgb> palette = spec.class_colors.empty() ? default_palette(source) : spec.class_colors;
  if (palette.size() != schema.class_count()) {
    throw ValidationError("scene spec: class_colors needs " + std::to_string(schema.class_count()) + " entries");
  }

  const auto n = static_cast<Eigen::Index>(em.points.size());
  PointCloud cloud;
  cloud.schema_name = schema.name();
  cloud.positions.resize(n, 3);
  cloud.colors.emplace(n, 3);
  cloud.labels.emplace(static_cast<std::size_t>(n));
  std::mt19937_64 crng(derive_seed(spec.seed, 4));
  std::normal_distribution<double> cn(0.0, 1.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Label id = ids[static_cast<std::size_t>(em.kinds[static_cast<std::size_t>(i)])];
    cloud.positions.row(i) = em.points[static_cast<std::size_t>(i)];
    (*cloud.labels)[static_cast<std::size_t>(i)] = id;
    for (int c = 0; c < 3; ++c) {
      const double v = palette[id][static_cast<std::size_t>(c)] + spec.color_noise * cn(crng);
      (*cloud.colors)(i, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }
  }
  return cloud;
}

}  // namespace

SceneLayout scene_layout(const SceneSpec& spec) {
  spec.validate();
  const double e = spec.extent;
  std::mt19937_64 rng(derive_seed(spec.seed, 1));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto in = [&](const Range& r) { return r.min + u(rng) * (r.max - r.min); };
  SceneLayout layout;
  const double w = spec.road_width;
  for (int r = 0; r < spec.road_count; ++r) {
    const double c = w / 2 + u(rng) * (e - w);
    if (r % 2 == 0) {
      layout.roads.push_back({0.0, c - w / 2, e, c + w / 2, 0.0});
    } else {
      layout.roads.push_back({c - w / 2, 0.0, c + w / 2, e, 0.0});
    }
  }
  auto clear_of_roads = [&](const Box& b, double margin) {
    return std::none_of(layout.roads.begin(), layout.roads.end(), [&](const Box& r) { return overlaps(r, b, margin); });
  };
  if (spec.water) {
    place(1, "water", [&] {
      const double sx = in(spec.water_size), sy = in(spec.water_size);
      if (sx + 2 > e || sy + 2 > e) return false;
      const double x0 = 1 + u(rng) * (e - sx - 2), y0 = 1 + u(rng) * (e - sy - 2);
      const Box b{x0, y0, x0 + sx, y0 + sy, 0.0};
      if (!clear_of_roads(b, 1.0)) return false;
      layout.water = b;
      return true;
    });
  }
  place(spec.building_count, "building", [&] {
    const double sx = in(spec.building_footprint), sy = in(spec.building_footprint);
    const double h = in(spec.building_height);
    if (sx + 2 > e || sy + 2 > e) return false;
    const double x0 = 1 + u(rng) * (e - sx - 2), y0 = 1 + u(rng) * (e - sy - 2);
    const Box b{x0, y0, x0 + sx, y0 + sy, h};
    if (!clear_of_roads(b, 1.0)) return false;
    if (layout.water && overlaps(*layout.water, b, 2.0)) return false;
    for (const auto& o : layout.buildings) {
      if (overlaps(o, b, 2.0)) return false;
    }
    layout.buildings.push_back(b);
    return true;
  });
  place(spec.tree_count, "tree", [&] {
    const double r = in(spec.tree_radius);
    const double x = r + u(rng) * (e - 2 * r), y = r + u(rng) * (e - 2 * r);
    if (x < r || y < r || x > e - r || y > e - r) return false;
    for (const auto& b : layout.buildings) {
      if (box_distance(b, x, y) < r + 1.0) return false;
    }
    if (layout.water && box_distance(*layout.water, x, y) < r + 1.0) return false;
    for (const auto& t : layout.trees) {
      if (std::hypot(t.x - x, t.y - y) < t.radius + r) return false;
    }
    layout.trees.push_back({x, y, r, 0.8 * r, in(spec.trunk_height)});
    return true;
  });
  return layout;
}

PointCloud generate_scene(const SceneSpec& spec) { return generate(spec, false, urban5_schema()); }

PointCloud generate_source_scene(const SceneSpec& spec) {
  return generate(spec, true, synthetic_source_schema());
}

PointCloud generate_source_scene(const SceneSpec& spec, const ClassSchema& source_schema) {
  if (source_schema.class_count() != kKindCount) {
    throw ValidationError("source scenes need an 8-class schema");
  }
  return generate(spec, true, source_schema);
}

}  // namespace urbanseg
