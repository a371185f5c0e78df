#include "glados/gaussian_scene.hpp"

#include <Eigen/Core>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include <json.hpp>

#include "glados/error.hpp"
#include "glados/image.hpp"

namespace glados {

namespace {

// Degree-0 spherical harmonic basis constant.
constexpr double kShC0 = 0.28209479177387814;

constexpr std::array<const char*, 14> kPlyProperties = {
    "x",       "y",       "z",       "f_dc_0", "f_dc_1", "f_dc_2", "opacity",
    "scale_0", "scale_1", "scale_2", "rot_0",  "rot_1",  "rot_2",  "rot_3"};

double color_to_dc(double c) { return (c - 0.5) / kShC0; }
double dc_to_color(double f) { return 0.5 + kShC0 * f; }

// Rounds `v` to float such that decoding and re-encoding reproduces the same
// float: repeated save/load cycles are then byte-stable.
template <typename Encode, typename Decode>
float stable_float(double v, Encode encode, Decode decode) {
  float f = static_cast<float>(encode(v));
  for (int i = 0; i < 8; ++i) {
    const float next = static_cast<float>(encode(decode(static_cast<double>(f))));
    if (next == f) break;
    f = next;
  }
  return f;
}

std::array<float, 4> decode_encode(const std::array<float, 4>& f) {
  const UnitQuaternion decoded(f[0], f[1], f[2], f[3]);
  return {static_cast<float>(decoded.w()), static_cast<float>(decoded.x()),
          static_cast<float>(decoded.y()), static_cast<float>(decoded.z())};
}

// Float quaternion that survives load (normalize in double) and re-save
// unchanged. Plain iteration can cycle between neighbours; in that case the
// nearest fixed point within two ulps per component is used.
std::array<float, 4> stable_quaternion(const UnitQuaternion& q) {
  const std::array<float, 4> start = {static_cast<float>(q.w()), static_cast<float>(q.x()),
                                      static_cast<float>(q.y()), static_cast<float>(q.z())};
  std::array<float, 4> f = start;
  for (int i = 0; i < 4; ++i) {
    const auto next = decode_encode(f);
    if (next == f) return f;
    f = next;
  }
  std::array<float, 4> best = f;
  double best_dist = std::numeric_limits<double>::infinity();
  std::array<float, 4> trial;
  for (int a = -2; a <= 2; ++a)
    for (int b = -2; b <= 2; ++b)
      for (int c = -2; c <= 2; ++c)
        for (int d = -2; d <= 2; ++d) {
          const int steps[4] = {a, b, c, d};
          double dist = 0.0;
          for (int k = 0; k < 4; ++k) {
            float v = start[k];
            const float dir = steps[k] > 0 ? INFINITY : -INFINITY;
            for (int s = 0; s < std::abs(steps[k]); ++s) v = std::nextafter(v, dir);
            trial[k] = v;
            dist += std::pow(static_cast<double>(v) - q.coeffs()[k], 2);
          }
          if (dist < best_dist && decode_encode(trial) == trial) {
            best = trial;
            best_dist = dist;
          }
        }
  return best;
}

std::size_t ply_type_size(const std::string& type) {
  if (type == "char" || type == "uchar" || type == "int8" || type == "uint8") return 1;
  if (type == "short" || type == "ushort" || type == "int16" || type == "uint16") return 2;
  if (type == "int" || type == "uint" || type == "float" || type == "int32" ||
      type == "uint32" || type == "float32")
    return 4;
  if (type == "double" || type == "float64") return 8;
  return 0;
}

double read_ply_value(const char* p, const std::string& type) {
  if (type == "float" || type == "float32") {
    float f;
    std::memcpy(&f, p, 4);
    return f;
  }
  if (type == "double" || type == "float64") {
    double d;
    std::memcpy(&d, p, 8);
    return d;
  }
  throw MalformedFile("unsupported PLY property type '" + type + "'");
}

}  // namespace

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::kCoarse:
      return "coarse";
    case Provenance::kExpansion:
      return "expansion";
    case Provenance::kRefinement:
      return "refinement";
  }
  return "coarse";
}

Provenance provenance_from_string(std::string_view name) {
  if (name == "coarse") return Provenance::kCoarse;
  if (name == "expansion") return Provenance::kExpansion;
  if (name == "refinement") return Provenance::kRefinement;
  throw MalformedFile("unknown provenance tag '" + std::string(name) + "'");
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double logit(double p) { return std::log(p / (1.0 - p)); }

double GaussianPrimitive::opacity() const { return sigmoid(opacity_logit); }

Mat3 covariance(const GaussianPrimitive& p) {
  const Mat3 r = p.rotation.to_matrix();
  const Eigen::Vector3d s2 = (2.0 * p.log_scale).array().exp();
  Mat3 sigma = r * s2.asDiagonal() * r.transpose();
  // Exact symmetry regardless of rounding in the triple product.
  return 0.5 * (sigma + sigma.transpose());
}

void GaussianScene::add(const GaussianPrimitive& p, Provenance tag) {
  primitives_.push_back(p);
  provenance_.push_back(tag);
}

GaussianScene merge(const GaussianScene& base, std::span<const GaussianPrimitive> added,
                    Provenance tag) {
  GaussianScene out = base;
  for (const auto& p : added) out.add(p, tag);
  return out;
}

std::filesystem::path sidecar_path(const std::filesystem::path& ply_path) {
  auto out = ply_path;
  out.replace_extension(".meta.json");
  return out;
}

void save_scene(const GaussianScene& scene, const std::filesystem::path& path) {
  std::ostringstream header;
  header << "ply\nformat binary_little_endian 1.0\n"
         << "element vertex " << scene.size() << "\n";
  for (const char* name : kPlyProperties) header << "property float " << name << "\n";
  header << "end_header\n";
  const std::string head = header.str();

  std::vector<std::uint8_t> bytes(head.begin(), head.end());
  bytes.reserve(bytes.size() + scene.size() * kPlyProperties.size() * 4);
  auto put = [&bytes](float f) {
    const auto u = std::bit_cast<std::uint32_t>(f);
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
  };
  for (const auto& p : scene.primitives()) {
    for (int i = 0; i < 3; ++i) put(static_cast<float>(p.mean[i]));
    for (int i = 0; i < 3; ++i) put(stable_float(p.color[i], color_to_dc, dc_to_color));
    put(static_cast<float>(p.opacity_logit));
    for (int i = 0; i < 3; ++i) put(static_cast<float>(p.log_scale[i]));
    for (float f : stable_quaternion(p.rotation)) put(f);
  }
  write_file_bytes(path, bytes);

  nlohmann::json meta;
  meta["format"] = "glados-provenance";
  meta["version"] = 1;
  auto tags = nlohmann::json::array();
  for (auto tag : scene.provenance()) tags.push_back(std::string(to_string(tag)));
  meta["provenance"] = tags;
  write_text_file(sidecar_path(path), meta.dump() + "\n");
}

GaussianScene load_scene(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  const std::string_view text(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  const auto end = text.find("end_header\n");
  if (text.substr(0, 4) != "ply\n" || end == std::string_view::npos) {
    throw MalformedFile(path.string() + ": missing PLY header");
  }
  std::istringstream header{std::string(text.substr(0, end))};
  std::string line;
  bool in_vertex = false;
  bool binary_le = false;
  std::size_t vertex_count = 0;
  std::size_t stride = 0;
  std::map<std::string, std::pair<std::size_t, std::string>> props;  // offset, type
  while (std::getline(header, line)) {
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "format") {
      std::string fmt;
      ls >> fmt;
      binary_le = fmt == "binary_little_endian";
    } else if (word == "element") {
      std::string name;
      ls >> name;
      in_vertex = name == "vertex";
      if (in_vertex) ls >> vertex_count;
    } else if (word == "property" && in_vertex) {
      std::string type, name;
      ls >> type >> name;
      if (type == "list") throw MalformedFile("property list in vertex element");
      const auto size = ply_type_size(type);
      if (size == 0) throw MalformedFile("property '" + name + "' has unknown type");
      props[name] = {stride, type};
      stride += size;
    }
  }
  if (!binary_le) throw MalformedFile(path.string() + ": expected binary_little_endian");
  for (const char* name : kPlyProperties) {
    if (!props.contains(name)) {
      throw MalformedFile(path.string() + ": vertex property '" + name + "' missing");
    }
  }
  const std::size_t body = end + std::string_view("end_header\n").size();
  if (bytes.size() < body + vertex_count * stride) {
    throw MalformedFile(path.string() + ": element 'vertex' truncated");
  }

  std::vector<Provenance> tags(vertex_count, Provenance::kCoarse);
  const auto meta_path = sidecar_path(path);
  if (std::filesystem::exists(meta_path)) {
    try {
      const auto meta = nlohmann::json::parse(read_text_file(meta_path));
      const auto& list = meta.at("provenance");
      if (list.size() != vertex_count) {
        throw MalformedFile(meta_path.string() + ": provenance count mismatch");
      }
      for (std::size_t i = 0; i < vertex_count; ++i) {
        tags[i] = provenance_from_string(list[i].get<std::string>());
      }
    } catch (const nlohmann::json::exception& e) {
      throw MalformedFile(meta_path.string() + ": " + e.what());
    }
  }

  GaussianScene scene;
  const char* base = reinterpret_cast<const char*>(bytes.data()) + body;
  for (std::size_t v = 0; v < vertex_count; ++v) {
    const char* row = base + v * stride;
    auto get = [&](const char* name) {
      const auto& [offset, type] = props.at(name);
      return read_ply_value(row + offset, type);
    };
    GaussianPrimitive p;
    p.mean = {get("x"), get("y"), get("z")};
    p.color = {dc_to_color(get("f_dc_0")), dc_to_color(get("f_dc_1")),
               dc_to_color(get("f_dc_2"))};
    p.opacity_logit = get("opacity");
    p.log_scale = {get("scale_0"), get("scale_1"), get("scale_2")};
    try {
      p.rotation = UnitQuaternion(get("rot_0"), get("rot_1"), get("rot_2"), get("rot_3"));
    } catch (const InvalidArgument&) {
      throw MalformedFile(path.string() + ": vertex " + std::to_string(v) +
                          " has a zero 'rot' quaternion");
    }
    scene.add(p, tags[v]);
  }
  return scene;
}

}  // namespace glados
