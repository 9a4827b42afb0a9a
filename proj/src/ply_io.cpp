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

#include "urbanseg/ply_io.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "binary_io.hpp"
#include "urbanseg/file_io.hpp"

namespace urbanseg {

namespace {

using detail::ByteReader;
using detail::ByteWriter;

PlyScalar parse_scalar_type(const std::string& t) {
  if (t == "char" || t == "int8") return PlyScalar::kInt8;
  if (t == "uchar" || t == "uint8") return PlyScalar::kUInt8;
  if (t == "short" || t == "int16") return PlyScalar::kInt16;
  if (t == "ushort" || t == "uint16") return PlyScalar::kUInt16;
  if (t == "int" || t == "int32") return PlyScalar::kInt32;
  if (t == "uint" || t == "uint32") return PlyScalar::kUInt32;
  if (t == "float" || t == "float32") return PlyScalar::kFloat32;
  if (t == "double" || t == "float64") return PlyScalar::kFloat64;
  throw FormatError("ply: unknown scalar type '" + t + "'");
}

bool is_float(PlyScalar t) { return t == PlyScalar::kFloat32 || t == PlyScalar::kFloat64; }

double read_binary_scalar(ByteReader& in, PlyScalar t) {
  switch (t) {
    case PlyScalar::kInt8: return in.get<std::int8_t>();
    case PlyScalar::kUInt8: return in.get<std::uint8_t>();
    case PlyScalar::kInt16: return in.get<std::int16_t>();
    case PlyScalar::kUInt16: return in.get<std::uint16_t>();
    case PlyScalar::kInt32: return in.get<std::int32_t>();
    case PlyScalar::kUInt32: return in.get<std::uint32_t>();
    case PlyScalar::kFloat32: return in.get<float>();
    case PlyScalar::kFloat64: return in.get<double>();
  }
  return 0.0;
}

// Whitespace tokenizer over the ASCII body.
class AsciiTokens {
 public:
  explicit AsciiTokens(std::string_view body) : body_(body) {}

  double next() {
    while (pos_ < body_.size() && std::isspace(static_cast<unsigned char>(body_[pos_]))) ++pos_;
    if (pos_ >= body_.size()) throw FormatError("ply: truncated body");
    std::size_t end = pos_;
    while (end < body_.size() && !std::isspace(static_cast<unsigned char>(body_[end]))) ++end;
    double v = 0.0;
    const char* first = body_.data() + pos_;
    const char* last = body_.data() + end;
    if (*first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last) {
      throw FormatError("ply: bad numeric token '" + std::string(body_.substr(pos_, end - pos_)) + "'");
    }
    pos_ = end;
    return v;
  }

 private:
  std::string_view body_;
  std::size_t pos_ = 0;
};

struct VertexColumns {
  int x = -1, y = -1, z = -1;
  int r = -1, g = -1, b = -1;
  int label = -1;
};

std::uint8_t to_color(double v, PlyScalar t) {
  if (is_float(t)) v = std::round(v * 255.0);
  return static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
}

}  // namespace

const PlyElement& PlyHeader::vertex() const {
  for (const auto& e : elements) {
    if (e.name == "vertex") return e;
  }
  throw FormatError("ply: no vertex element");
}

PlyHeader parse_ply_header(std::string_view bytes, std::size_t* header_size) {
  PlyHeader header;
  std::size_t pos = 0;
  bool have_format = false;
  bool first = true;
  while (true) {
    const std::size_t eol = bytes.find('\n', pos);
    if (eol == std::string_view::npos) throw FormatError("ply: unterminated header");
    std::string line(bytes.substr(pos, eol - pos));
    pos = eol + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (first) {
      if (line != "ply") throw FormatError("ply: missing 'ply' magic");
      first = false;
      continue;
    }
    std::istringstream ss(line);
    std::string keyword;
    ss >> keyword;
    if (keyword.empty()) continue;
    if (keyword == "end_header") break;
    if (keyword == "format") {
      std::string fmt, version;
      ss >> fmt >> version;
      if (fmt == "ascii") {
        header.format = PlyFormat::kAscii;
      } else if (fmt == "binary_little_endian") {
        header.format = PlyFormat::kBinaryLittleEndian;
      } else if (fmt == "binary_big_endian") {
        throw FormatError("ply: binary_big_endian is not supported");
      } else {
        throw FormatError("ply: unknown format '" + fmt + "'");
      }
      have_format = true;
    } else if (keyword == "comment" || keyword == "obj_info") {
      std::string rest;
      std::getline(ss, rest);
      if (!rest.empty() && rest.front() == ' ') rest.erase(0, 1);
      if (keyword == "comment") header.comments.push_back(rest);
    } else if (keyword == "element") {
      PlyElement e;
      if (!(ss >> e.name >> e.count)) throw FormatError("ply: malformed element line");
      for (const auto& other : header.elements) {
        if (other.name == e.name) throw FormatError("ply: duplicate element '" + e.name + "'");
      }
      header.elements.push_back(std::move(e));
    } else if (keyword == "property") {
      if (header.elements.empty()) throw FormatError("ply: property before any element");
      PlyProperty p;
      std::string type;
      if (!(ss >> type)) throw FormatError("ply: malformed property line");
      if (type == "list") {
        std::string count_type, item_type;
        if (!(ss >> count_type >> item_type >> p.name)) throw FormatError("ply: malformed list property");
        p.is_list = true;
        p.count_type = parse_scalar_type(count_type);
        p.type = parse_scalar_type(item_type);
      } else {
        p.type = parse_scalar_type(type);
        if (!(ss >> p.name)) throw FormatError("ply: malformed property line");
      }
      auto& props = header.elements.back().properties;
      for (const auto& other : props) {
        if (other.name == p.name) throw FormatError("ply: duplicate property '" + p.name + "'");
      }
      props.push_back(std::move(p));
    } else {
      throw FormatError("ply: unknown header keyword '" + keyword + "'");
    }
  }
  if (!have_format) throw FormatError("ply: missing format line");
  header.vertex();
  if (header_size) *header_size = pos;
  return header;
}

PointCloud read_ply(std::string_view bytes, const PlyReadOptions& options) {
  std::size_t body_offset = 0;
  const PlyHeader header = parse_ply_header(bytes, &body_offset);
  const PlyElement& vertex = header.vertex();

  VertexColumns cols;
  for (int i = 0; i < static_cast<int>(vertex.properties.size()); ++i) {
    const auto& p = vertex.properties[static_cast<std::size_t>(i)];
    if (p.is_list) continue;
    if (p.name == "x") cols.x = i;
    if (p.name == "y") cols.y = i;
    if (p.name == "z") cols.z = i;
    if (p.name == "red") cols.r = i;
    if (p.name == "green") cols.g = i;
    if (p.name == "blue") cols.b = i;
  }
  for (const auto& name : options.label_properties) {
    for (int i = 0; i < static_cast<int>(vertex.properties.size()); ++i) {
      const auto& p = vertex.properties[static_cast<std::size_t>(i)];
      if (!p.is_list && p.name == name) cols.label = i;
    }
    if (cols.label >= 0) break;
  }
  if (cols.x < 0 || cols.y < 0 || cols.z < 0) throw FormatError("ply: vertex lacks x/y/z");
  const bool has_colors = cols.r >= 0 && cols.g >= 0 && cols.b >= 0;

  PointCloud cloud;
  for (const auto& c : header.comments) {
    if (c.rfind("schema ", 0) == 0) cloud.schema_name = c.substr(7);
  }
  const auto n = static_cast<Eigen::Index>(vertex.count);
  if (header.format == PlyFormat::kBinaryLittleEndian) {
    // Cheap sanity bound before allocating.
    if (vertex.count > bytes.size()) throw FormatError("ply: truncated body");
  }
  cloud.positions.resize(n, 3);
  if (has_colors) cloud.colors.emplace(n, 3);
  if (cols.label >= 0) cloud.labels.emplace(static_cast<std::size_t>(n));

  std::vector<double> record(vertex.properties.size());
  const std::string_view body = bytes.substr(body_offset);
  ByteReader bin(body, "ply");
  AsciiTokens ascii(body);
  auto next_value = [&](PlyScalar t) {
    return header.format == PlyFormat::kAscii ? ascii.next() : read_binary_scalar(bin, t);
  };

  for (const auto& element : header.elements) {
    const bool is_vertex = element.name == "vertex";
    for (std::uint64_t row = 0; row < element.count; ++row) {
      for (std::size_t pi = 0; pi < element.properties.size(); ++pi) {
        const auto& p = element.properties[pi];
        if (p.is_list) {
          const double count = next_value(p.count_type);
          if (count < 0) throw FormatError("ply: negative list length");
          for (std::uint64_t k = 0; k < static_cast<std::uint64_t>(count); ++k) next_value(p.type);
          continue;
        }
        const double v = next_value(p.type);
        if (is_vertex) record[pi] = v;
      }
      if (!is_vertex) continue;
      const auto r = static_cast<Eigen::Index>(row);
      cloud.positions(r, 0) = record[static_cast<std::size_t>(cols.x)];
      cloud.positions(r, 1) = record[static_cast<std::size_t>(cols.y)];
      cloud.positions(r, 2) = record[static_cast<std::size_t>(cols.z)];
      if (has_colors) {
        (*cloud.colors)(r, 0) = to_color(record[static_cast<std::size_t>(cols.r)],
                                         vertex.properties[static_cast<std::size_t>(cols.r)].type);
        (*cloud.colors)(r, 1) = to_color(record[static_cast<std::size_t>(cols.g)],
                                         vertex.properties[static_cast<std::size_t>(cols.g)].type);
        (*cloud.colors)(r, 2) = to_color(record[static_cast<std::size_t>(cols.b)],
                                         vertex.properties[static_cast<std::size_t>(cols.b)].type);
      }
      if (cols.label >= 0) {
        const double l = std::round(record[static_cast<std::size_t>(cols.label)]);
        if (l < 0 || !std::isfinite(l)) throw FormatError("ply: negative or non-finite label");
        (*cloud.labels)[row] = static_cast<Label>(l);
      }
    }
    // Elements after the vertex block are not needed.
    if (is_vertex) break;
  }
  return cloud;
}

PointCloud read_ply_file(const std::string& path, const PlyReadOptions& options) {
  return read_ply(read_file(path), options);
}

std::string write_ply(const PointCloud& cloud, PlyFormat format) {
  const auto n = cloud.size();
  if (cloud.colors && cloud.colors->rows() != n) throw ValidationError("write_ply: color count mismatch");
  if (cloud.labels) {
    if (static_cast<Eigen::Index>(cloud.labels->size()) != n) {
      throw ValidationError("write_ply: label count mismatch");
    }
    for (Label l : *cloud.labels) {
      if (l > 255) throw ValidationError("write_ply: label does not fit in uchar");
    }
  }
  std::string out = "ply\n";
  out += format == PlyFormat::kAscii ? "format ascii 1.0\n" : "format binary_little_endian 1.0\n";
  out += "comment generated by urbanseg\n";
  if (!cloud.schema_name.empty()) out += "comment schema " + cloud.schema_name + "\n";
  out += "element vertex " + std::to_string(n) + "\n";
  out += "property double x\nproperty double y\nproperty double z\n";
  if (cloud.colors) out += "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  if (cloud.labels) out += "property uchar class\n";
  out += "end_header\n";

  if (format == PlyFormat::kBinaryLittleEndian) {
    ByteWriter w;
    w.bytes() = std::move(out);
    for (Eigen::Index i = 0; i < n; ++i) {
      w.put(cloud.positions(i, 0));
      w.put(cloud.positions(i, 1));
      w.put(cloud.positions(i, 2));
      if (cloud.colors) {
        w.put((*cloud.colors)(i, 0));
        w.put((*cloud.colors)(i, 1));
        w.put((*cloud.colors)(i, 2));
      }
      if (cloud.labels) w.put(static_cast<std::uint8_t>((*cloud.labels)[static_cast<std::size_t>(i)]));
    }
    return std::move(w.bytes());
  }

  char buf[64];
  auto append_double = [&](double v) {
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, ptr);
  };
  for (Eigen::Index i = 0; i < n; ++i) {
    append_double(cloud.positions(i, 0));
    out += ' ';
    append_double(cloud.positions(i, 1));
    out += ' ';
    append_double(cloud.positions(i, 2));
    if (cloud.colors) {
      for (int c = 0; c < 3; ++c) {
        out += ' ';
        out += std::to_string(static_cast<int>((*cloud.colors)(i, c)));
      }
    }
    if (cloud.labels) {
      out += ' ';
      out += std::to_string((*cloud.labels)[static_cast<std::size_t>(i)]);
    }
    out += '\n';
  }
  return out;
}

void write_ply_file(const PointCloud& cloud, const std::string& path, PlyFormat format) {
  write_file_atomic(path, write_ply(cloud, format));
}

// ---------------------------------------------------------------------------
// PCB1

std::size_t dtype_size(DType dtype) {
  switch (dtype) {
    case DType::kUInt8: return 1;
    case DType::kInt32:
    case DType::kUInt32:
    case DType::kFloat32: return 4;
    case DType::kInt64:
    case DType::kFloat64: return 8;
  }
  throw FormatError("unknown dtype code");
}

std::uint64_t NamedArray::element_count() const {
  std::uint64_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

bool ArrayBundle::contains(std::string_view name) const {
  for (const auto& a : arrays_) {
    if (a.name == name) return true;
  }
  return false;
}

const NamedArray& ArrayBundle::at(std::string_view name) const {
  for (const auto& a : arrays_) {
    if (a.name == name) return a;
  }
  throw FormatError("bundle has no array '" + std::string(name) + "'");
}

void ArrayBundle::insert(NamedArray array) {
  if (contains(array.name)) throw ValidationError("bundle already has array '" + array.name + "'");
  arrays_.push_back(std::move(array));
}

bool operator==(const ArrayBundle& a, const ArrayBundle& b) {
  if (a.arrays_.size() != b.arrays_.size()) return false;
  for (std::size_t i = 0; i < a.arrays_.size(); ++i) {
    const auto& x = a.arrays_[i];
    const auto& y = b.arrays_[i];
    if (x.name != y.name || x.dtype != y.dtype || x.dims != y.dims || x.data != y.data) return false;
  }
  return true;
}

namespace {

template <typename T>
void put_payload(ByteWriter& w, const NamedArray& a) {
  w.put_array(reinterpret_cast<const T*>(a.data.data()), a.data.size() / sizeof(T));
}

template <typename T>
void get_payload(ByteReader& r, NamedArray& a, std::uint64_t count) {
  if (count > r.remaining() / sizeof(T)) throw FormatError("PCB1: truncated payload");
  a.data.resize(count * sizeof(T));
  r.get_array(reinterpret_cast<T*>(a.data.data()), count);
}

}  // namespace

std::string ArrayBundle::serialize() const {
  ByteWriter w;
  w.put_bytes("PCB1");
  w.put<std::uint32_t>(kVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(arrays_.size()));
  for (const auto& a : arrays_) {
    w.put_string(a.name);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(a.dtype));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(a.dims.size()));
    for (auto d : a.dims) w.put<std::uint64_t>(d);
    switch (a.dtype) {
      case DType::kUInt8: put_payload<std::uint8_t>(w, a); break;
      case DType::kInt32: put_payload<std::int32_t>(w, a); break;
      case DType::kUInt32: put_payload<std::uint32_t>(w, a); break;
      case DType::kInt64: put_payload<std::int64_t>(w, a); break;
      case DType::kFloat32: put_payload<float>(w, a); break;
      case DType::kFloat64: put_payload<double>(w, a); break;
    }
  }
  return std::move(w.bytes());
}

ArrayBundle ArrayBundle::parse(std::string_view bytes) {
  ByteReader r(bytes, "PCB1");
  if (r.remaining() < 4 || r.get_bytes(4) != "PCB1") throw FormatError("PCB1: bad magic");
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) throw FormatError("PCB1: unsupported version " + std::to_string(version));
  const auto count = r.get<std::uint32_t>();
  ArrayBundle bundle;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedArray a;
    a.name = r.get_string();
    const auto code = r.get<std::uint8_t>();
    if (code < 1 || code > 6) throw FormatError("PCB1: unknown dtype code " + std::to_string(code));
    a.dtype = static_cast<DType>(code);
    const auto rank = r.get<std::uint32_t>();
    if (rank > 8) throw FormatError("PCB1: implausible rank");
    for (std::uint32_t d = 0; d < rank; ++d) a.dims.push_back(r.get<std::uint64_t>());
    const std::uint64_t n = a.element_count();
    switch (a.dtype) {
      case DType::kUInt8: get_payload<std::uint8_t>(r, a, n); break;
      case DType::kInt32: get_payload<std::int32_t>(r, a, n); break;
      case DType::kUInt32: get_payload<std::uint32_t>(r, a, n); break;
      case DType::kInt64: get_payload<std::int64_t>(r, a, n); break;
      case DType::kFloat32: get_payload<float>(r, a, n); break;
      case DType::kFloat64: get_payload<double>(r, a, n); break;
    }
    if (bundle.contains(a.name)) throw FormatError("PCB1: duplicate array '" + a.name + "'");
    bundle.arrays_.push_back(std::move(a));
  }
  if (r.remaining() != 0) throw FormatError("PCB1: trailing bytes");
  return bundle;
}

void write_bundle_file(const ArrayBundle& bundle, const std::string& path) {
  write_file_atomic(path, bundle.serialize());
}

ArrayBundle read_bundle_file(const std::string& path) { return ArrayBundle::parse(read_file(path)); }

ArrayBundle cloud_to_bundle(const PointCloud& cloud) {
  ArrayBundle out;
  out.add_matrix("positions", cloud.positions);
  if (cloud.colors) out.add_matrix("colors", *cloud.colors);
  if (cloud.labels) out.add<std::uint32_t>("labels", {cloud.labels->size()}, *cloud.labels);
  const std::string& schema = cloud.schema_name;
  out.add<std::uint8_t>("schema_name", {schema.size()},
                        std::span(reinterpret_cast<const std::uint8_t*>(schema.data()), schema.size()));
  return out;
}

PointCloud cloud_from_bundle(const ArrayBundle& bundle) {
  PointCloud c;
  auto p = bundle.get_matrix<double>("positions");
  if (p.cols() != 3) throw FormatError("cloud bundle: positions must have 3 columns");
  c.positions = p;
  const Eigen::Index n = c.positions.rows();
  if (bundle.contains("colors")) {
    auto rgb = bundle.get_matrix<std::uint8_t>("colors");
    if (rgb.rows() != n || rgb.cols() != 3) throw FormatError("cloud bundle: colors shape mismatch");
    c.colors = rgb;
  }
  if (bundle.contains("labels")) {
    c.labels = bundle.get<std::uint32_t>("labels");
    if (static_cast<Eigen::Index>(c.labels->size()) != n) throw FormatError("cloud bundle: label count mismatch");
  }
  const auto name = bundle.get<std::uint8_t>("schema_name");
  c.schema_name.assign(name.begin(), name.end());
  return c;
}

void write_array_bundle(const NeighborGraph& graph, const FeatureMatrix& features,
                        const std::string& path) {
  if (graph.indices.rows() != features.rows()) {
    throw ValidationError("write_array_bundle: graph has " + std::to_string(graph.indices.rows()) +
                          " rows but features have " + std::to_string(features.rows()));
  }
  if (graph.distances.rows() != graph.indices.rows() || graph.distances.cols() != graph.indices.cols()) {
    throw ValidationError("write_array_bundle: index/distance table shapes differ");
  }
  ArrayBundle b;
  b.add_matrix("neighbor_indices", graph.indices);
  b.add_matrix("neighbor_distances", graph.distances);
  b.add_matrix("features", features);
  write_bundle_file(b, path);
}

NeighborhoodExport read_array_bundle(const std::string& path) {
  const ArrayBundle b = read_bundle_file(path);
  NeighborhoodExport out;
  out.graph.indices = b.get_matrix<std::int32_t>("neighbor_indices");
  out.graph.distances = b.get_matrix<double>("neighbor_distances");
  out.graph.k = static_cast<int>(out.graph.indices.cols());
  out.features = b.get_matrix<float>("features");
  if (out.graph.distances.rows() != out.graph.indices.rows() ||
      out.features.rows() != out.graph.indices.rows()) {
    throw FormatError("PCB1: neighborhood arrays have inconsistent row counts");
  }
  return out;
}

}  // namespace urbanseg
