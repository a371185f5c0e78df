#include "glados/synthetic_data.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <Eigen/LU>

#include "glados/error.hpp"
#include "glados/rasterizer.hpp"
#include "glados/seeds.hpp"

namespace glados {

std::string to_string(TextureStyle style) {
  switch (style) {
    case TextureStyle::kFlat:
      return "flat";
    case TextureStyle::kChecker:
      return "checker";
    case TextureStyle::kGradient:
      return "gradient";
  }
  return "flat";
}

TextureStyle parse_texture_style(const std::string& text) {
  if (text == "flat") return TextureStyle::kFlat;
  if (text == "checker") return TextureStyle::kChecker;
  if (text == "gradient") return TextureStyle::kGradient;
  throw InvalidArgument("unknown texture style '" + text + "'");
}

void SyntheticSceneSpec::validate() const {
  if (!(extent.array() > 0.0).all()) throw InvalidArgument("room extent must be positive");
  if (primitive_count < 1) throw InvalidArgument("primitive count must be >= 1");
  if (!(separation_deg >= 0.0 && separation_deg <= 180.0)) {
    throw InvalidArgument("separation must be in [0, 180] degrees");
  }
  if (image_size < 8) throw InvalidArgument("image size must be >= 8");
  if (!(hfov_deg > 0.0 && hfov_deg < 180.0)) throw InvalidArgument("hfov must be in (0, 180)");
  if (!(pointmap_noise >= 0.0)) throw InvalidArgument("pointmap noise must be >= 0");
  if (!(std::abs(baseline) / 2.0 < extent.x())) throw InvalidArgument("baseline leaves the room");
}

nlohmann::json to_json(const SyntheticSceneSpec& spec) {
  return {{"seed", spec.seed},
          {"extent", {spec.extent.x(), spec.extent.y(), spec.extent.z()}},
          {"primitive_count", spec.primitive_count},
          {"texture", to_string(spec.texture)},
          {"separation_deg", spec.separation_deg},
          {"baseline", spec.baseline},
          {"image_size", spec.image_size},
          {"hfov_deg", spec.hfov_deg},
          {"pointmap_noise", spec.pointmap_noise}};
}

SyntheticSceneSpec synthetic_spec_from_json(const nlohmann::json& j) {
  SyntheticSceneSpec s;
  try {
    s.seed = j.value("seed", s.seed);
    if (j.contains("extent")) {
      const auto e = j.at("extent").get<std::array<double, 3>>();
      s.extent = {e[0], e[1], e[2]};
    }
    s.primitive_count = j.value("primitive_count", s.primitive_count);
    if (j.contains("texture")) s.texture = parse_texture_style(j.at("texture").get<std::string>());
    s.separation_deg = j.value("separation_deg", s.separation_deg);
    s.baseline = j.value("baseline", s.baseline);
    s.image_size = j.value("image_size", s.image_size);
    s.hfov_deg = j.value("hfov_deg", s.hfov_deg);
    s.pointmap_noise = j.value("pointmap_noise", s.pointmap_noise);
  } catch (const nlohmann::json::exception& e) {
    throw MalformedFile(std::string("synthetic spec: ") + e.what());
  }
  s.validate();
  return s;
}

double scene_scale(const GaussianScene& scene) {
  if (scene.empty()) return 0.0;
  Vec3 lo = scene[0].mean, hi = scene[0].mean;
  for (const auto& p : scene.primitives()) {
    lo = lo.cwiseMin(p.mean);
    hi = hi.cwiseMax(p.mean);
  }
  return (hi - lo).norm();
}

namespace {

Mat3 yaw_matrix(double rad) {
  Mat3 r;
  r << std::cos(rad), 0.0, std::sin(rad), 0.0, 1.0, 0.0, -std::sin(rad), 0.0, std::cos(rad);
  return r;
}

// Visible-and-unoccluded test for one view.
struct VisibilityProbe {
  const CameraView& view;
  RenderOutput frame;
  double tolerance;

  bool sees(const GaussianPrimitive& p) const {
    const Vec3& point = p.mean;
    const auto proj = try_project(point, view);
    if (!proj || proj->depth <= kNearPlane) return false;
    const double u = proj->pixel.x(), v = proj->pixel.y();
    if (u < -0.5 || v < -0.5 || u >= view.width() - 0.5 || v >= view.height() - 0.5) return false;
    const int x = std::clamp(static_cast<int>(std::lround(u)), 0, view.width() - 1);
    const int y = std::clamp(static_cast<int>(std::lround(v)), 0, view.height() - 1);
    if (frame.alpha.at(x, y) <= 0.0) return false;
    // Rendered depth blends the neighbours of the same surface, so a point is
    // only occluded when something lies beyond its own footprint.
    const double own = 3.0 * p.scale().maxCoeff();
    return proj->depth <= frame.depth.at(x, y) + std::max(tolerance, own);
  }
};

Vec3 texture_color(TextureStyle style, const Vec3& base, const Vec3& alt, double u, double v,
                   double su, double sv) {
  switch (style) {
    case TextureStyle::kFlat:
      return base;
    case TextureStyle::kChecker: {
      const long cu = static_cast<long>(std::floor(u / 0.5));
      const long cv = static_cast<long>(std::floor(v / 0.5));
      return ((cu + cv) % 2 == 0) ? base : alt;
    }
    case TextureStyle::kGradient: {
      const double t = 0.5 * (u / su + 1.0), s = 0.5 * (v / sv + 1.0);
      return (base * (1.0 - t) + alt * t) * (0.75 + 0.25 * s);
    }
  }
  return base;
}

GaussianScene build_room(const SyntheticSceneSpec& spec) {
  std::mt19937_64 rng(derive_seed(spec.seed, "synthetic.room"));
  const Vec3& e = spec.extent;
  double total_area = 0.0;
  for (int a = 0; a < 3; ++a) total_area += 2.0 * 4.0 * e[(a + 1) % 3] * e[(a + 2) % 3];

  GaussianScene scene;
  for (int a = 0; a < 3; ++a) {
    for (const double sign : {-1.0, 1.0}) {
      const int ua = (a + 1) % 3, va = (a + 2) % 3;
      const double lu = 2.0 * e[ua], lv = 2.0 * e[va];
      const double share = spec.primitive_count * lu * lv / total_area;
      const int nu = std::max(1, static_cast<int>(std::lround(std::sqrt(share * lu / lv))));
      const int nv = std::max(1, static_cast<int>(std::lround(share / nu)));
      const double cu = lu / nu, cv = lv / nv;

      Vec3 base, alt;
      for (int c = 0; c < 3; ++c) base[c] = 0.2 + 0.7 * unit_double(rng);
      for (int c = 0; c < 3; ++c) alt[c] = 0.2 + 0.7 * unit_double(rng);
      Mat3 frame = Mat3::Zero();
      frame(ua, 0) = 1.0;
      frame(va, 1) = 1.0;
      frame(a, 2) = 1.0;
      if (frame.determinant() < 0.0) frame.col(2) *= -1.0;
      const UnitQuaternion rotation = UnitQuaternion::from_matrix(frame);

      for (int j = 0; j < nv; ++j) {
        for (int i = 0; i < nu; ++i) {
          const double u = -e[ua] + (i + 0.5 + 0.5 * (unit_double(rng) - 0.5)) * cu;
          const double v = -e[va] + (j + 0.5 + 0.5 * (unit_double(rng) - 0.5)) * cv;
          GaussianPrimitive p;
          p.mean[a] = sign * e[a];
          p.mean[ua] = u;
          p.mean[va] = v;
          p.rotation = rotation;
          p.log_scale = Vec3(std::log(0.6 * cu), std::log(0.6 * cv),
                             std::log(0.02 * std::min(cu, cv)));
          p.opacity_logit = logit(0.95);
          p.color = texture_color(spec.texture, base, alt, u, v, e[ua], e[va])
                        .cwiseMax(0.0)
                        .cwiseMin(1.0);
          scene.add(p, Provenance::kCoarse);
        }
      }
    }
  }
  return scene;
}

}  // namespace

bool verify_disjoint(const GaussianScene& scene, const CameraView& a, const CameraView& b) {
  const double tol = 1e-3 * scene_scale(scene);
  const VisibilityProbe pa{a, render(scene, a), tol};
  const VisibilityProbe pb{b, render(scene, b), tol};
  for (const auto& p : scene.primitives()) {
    if (pa.sees(p) && pb.sees(p)) return false;
  }
  return true;
}

Image room_pointmap(const Vec3& extent, const CameraView& view, const CameraView& reference,
                    int width, int height) {
  const Intrinsics k = view.intrinsics().rescaled(width, height);
  const Mat3 cam_to_world = view.rotation_matrix().transpose();
  const Vec3 origin = view.camera_to_world(Vec3::Zero());
  Image out(width, height, 3);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const Vec3 dir = cam_to_world * Vec3((x - k.cx) / k.fx, (y - k.cy) / k.fy, 1.0);
      // Exit distance from inside the box along each axis.
      double t = std::numeric_limits<double>::infinity();
      for (int a = 0; a < 3; ++a) {
        if (dir[a] > 0.0) t = std::min(t, (extent[a] - origin[a]) / dir[a]);
        if (dir[a] < 0.0) t = std::min(t, (-extent[a] - origin[a]) / dir[a]);
      }
      const Vec3 local = reference.world_to_camera(origin + t * dir);
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = local[c];
    }
  }
  return out;
}

SyntheticScene generate(const SyntheticSceneSpec& spec) {
  spec.validate();
  SyntheticScene out;
  out.ground_truth = build_room(spec);
  out.scene_scale = scene_scale(out.ground_truth);

  const double f = 0.5 * spec.image_size / std::tan(0.5 * spec.hfov_deg * M_PI / 180.0);
  const double c = 0.5 * (spec.image_size - 1);
  const Intrinsics k{f, f, c, c, spec.image_size, spec.image_size};
  const double half = 0.5 * spec.separation_deg * M_PI / 180.0;
  const std::array<double, 3> yaw = {-half, 0.0, half};
  const std::array<double, 3> shift = {-0.5 * spec.baseline, 0.0, 0.5 * spec.baseline};
  for (int v = 0; v < 3; ++v) {
    out.views[v] = CameraView::from_camera_pose(yaw_matrix(yaw[v]), Vec3(shift[v], 0.0, 0.0), k);
  }
  if (!verify_disjoint(out.ground_truth, out.views[0], out.views[2])) {
    throw CannotSeparate("input views share visible geometry at " +
                         std::to_string(spec.separation_deg) + " degrees");
  }

  std::array<Image, 3> renders;
  for (int v = 0; v < 3; ++v) renders[v] = quantize8(render(out.ground_truth, out.views[v]).rgb);
  out.pair_images = {renders[0], renders[2]};

  const int pw = spec.image_size / 2, ph = spec.image_size / 2;
  std::mt19937_64 noise_rng(derive_seed(spec.seed, "synthetic.pointmap_noise"));
  std::normal_distribution<double> noise(0.0, 1.0);
  for (const auto& [i, j] : std::array<std::pair<int, int>, 4>{{{0, 1}, {1, 0}, {1, 2}, {2, 1}}}) {
    PairPointmap pair;
    pair.view_i = i;
    pair.view_j = j;
    pair.pointmap_i = room_pointmap(spec.extent, out.views[i], out.views[i], pw, ph);
    pair.pointmap_j = room_pointmap(spec.extent, out.views[j], out.views[i], pw, ph);
    if (spec.pointmap_noise > 0.0) {
      for (Image* m : {&pair.pointmap_i, &pair.pointmap_j}) {
        for (double& value : m->data()) value += spec.pointmap_noise * noise(noise_rng);
      }
    }
    pair.confidence_i = Image(pw, ph, 1, 1.0);
    pair.confidence_j = Image(pw, ph, 1, 1.0);
    pair.colors_i = resize_bilinear(renders[i], pw, ph);
    pair.colors_j = resize_bilinear(renders[j], pw, ph);
    out.pointmaps.push_back(std::move(pair));
  }
  return out;
}

void write_bundle(const std::filesystem::path& dir, const SyntheticScene& scene,
                  const SyntheticSceneSpec& spec) {
  std::filesystem::create_directories(dir / "pair");
  std::filesystem::create_directories(dir / "pointmaps");
  save_scene(scene.ground_truth, dir / "gt.ply");
  nlohmann::json views = nlohmann::json::array();
  const std::array<const char*, 3> roles = {"input", "midpoint", "input"};
  for (int v = 0; v < 3; ++v) {
    views.push_back({{"id", v}, {"role", roles[v]}, {"camera", to_json(scene.views[v])}});
  }
  const nlohmann::json meta = {{"views", views},
                               {"scene_scale", scene.scene_scale},
                               {"spec", to_json(spec)}};
  write_text_file(dir / "views.json", meta.dump(2) + "\n");
  write_png_rgb8(dir / "pair" / "view0.png", scene.pair_images[0]);
  write_png_rgb8(dir / "pair" / "view1.png", scene.pair_images[1]);
  write_text_file(dir / "pair" / "poses.json",
                  to_json(std::vector<CameraView>{scene.views[0], scene.views[2]}).dump(2) + "\n");
  for (const auto& pair : scene.pointmaps) {
    write_ppmp(dir / "pointmaps" /
                   ("pair_" + std::to_string(pair.view_i) + "_" + std::to_string(pair.view_j) +
                    ".ppmp"),
               pair);
  }
}

InputPair read_bundle(const std::filesystem::path& dir) {
  const auto pair_dir = dir / "pair";
  if (!std::filesystem::exists(pair_dir / "view0.png") ||
      !std::filesystem::exists(pair_dir / "view1.png")) {
    throw MalformedFile("bundle " + dir.string() + " has no pair/view0.png and pair/view1.png");
  }
  InputPair out;
  out.images = {read_png_rgb(pair_dir / "view0.png"), read_png_rgb(pair_dir / "view1.png")};
  if (std::filesystem::exists(pair_dir / "poses.json")) {
    try {
      const auto poses = camera_views_from_json(nlohmann::json::parse(read_text_file(pair_dir / "poses.json")));
      if (poses.size() != 2) throw MalformedFile("poses.json must hold two cameras");
      out.poses = std::array<CameraView, 2>{poses[0], poses[1]};
    } catch (const nlohmann::json::exception& e) {
      throw MalformedFile(std::string("poses.json: ") + e.what());
    }
  }
  if (std::filesystem::is_directory(dir / "pointmaps")) out.pointmap_dir = dir / "pointmaps";
  return out;
}

SyntheticSceneSpec benchmark_spec(int index) {
  if (index < 0 || index >= kBenchmarkScenes) throw OutOfRange("benchmark scene index out of range");
  SyntheticSceneSpec spec;
  spec.seed = static_cast<std::uint64_t>(index);
  constexpr TextureStyle kStyles[3] = {TextureStyle::kChecker, TextureStyle::kGradient,
                                       TextureStyle::kFlat};
  spec.texture = kStyles[index % 3];
  return spec;
}

}  // namespace glados
