#include <doctest.h>

#include <Eigen/Dense>
#include <filesystem>
#include <limits>

#include "glados/coarse_alignment.hpp"
#include "glados/error.hpp"
#include "glados/rasterizer.hpp"
#include "glados/synthetic_data.hpp"
#include "pose_compare.hpp"

using namespace glados;

namespace {

Intrinsics intrinsics(int size = 48) {
  const double f = 0.5 * size / std::tan(M_PI / 6.0);
  return {f, f, 0.5 * (size - 1), 0.5 * (size - 1), size, size};
}

Mat3 yaw(double deg) {
  return Eigen::AngleAxisd(deg * M_PI / 180.0, Vec3::UnitY()).toRotationMatrix();
}

GaussianPrimitive blob(const Vec3& at) {
  GaussianPrimitive p;
  p.mean = at;
  p.log_scale = Vec3::Constant(std::log(0.1));
  p.opacity_logit = 2.0;
  p.color = {0.5, 0.5, 0.5};
  return p;
}

// Independent oracle: nearest plane hit among the six walls.
Vec3 wall_hit(const Vec3& extent, const Vec3& origin, const Vec3& dir) {
  double best = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    for (double sign : {-1.0, 1.0}) {
      if (dir[a] == 0.0) continue;
      const double t = (sign * extent[a] - origin[a]) / dir[a];
      if (t <= 0.0) continue;
      const Vec3 hit = origin + t * dir;
      bool inside = true;
      for (int b = 0; b < 3; ++b) inside = inside && std::abs(hit[b]) <= extent[b] + 1e-9;
      if (inside) best = std::min(best, t);
    }
  }
  return origin + best * dir;
}

}  // namespace

TEST_CASE("texture style names round trip") {
  for (auto s : {TextureStyle::kFlat, TextureStyle::kChecker, TextureStyle::kGradient}) {
    CHECK(parse_texture_style(to_string(s)) == s);
  }
  CHECK_THROWS_AS(parse_texture_style("marble"), InvalidArgument);
}

TEST_CASE("spec validation and json round trip") {
  SyntheticSceneSpec spec;
  spec.seed = 12;
  spec.texture = TextureStyle::kGradient;
  spec.pointmap_noise = 0.03;
  const auto back = synthetic_spec_from_json(to_json(spec));
  CHECK(to_json(back) == to_json(spec));
  SyntheticSceneSpec bad = spec;
  bad.primitive_count = 0;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  bad = spec;
  bad.extent = {1.0, -1.0, 1.0};
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  bad = spec;
  bad.separation_deg = 200.0;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  CHECK_THROWS_AS(synthetic_spec_from_json({{"texture", 4}}), MalformedFile);
}

TEST_CASE("verify_disjoint: identical views overlap") {
  GaussianScene scene;
  for (int i = 0; i < 5; ++i) scene.add(blob({0.3 * i - 0.6, 0.0, 3.0}), Provenance::kCoarse);
  const auto view = CameraView::from_camera_pose(Mat3::Identity(), Vec3::Zero(), intrinsics());
  CHECK_FALSE(verify_disjoint(scene, view, view));
}

TEST_CASE("verify_disjoint: back-to-back cameras over two clusters") {
  GaussianScene scene;
  for (int i = 0; i < 6; ++i) {
    scene.add(blob({0.2 * i - 0.5, 0.1, 3.0}), Provenance::kCoarse);
    scene.add(blob({0.2 * i - 0.5, -0.1, -3.0}), Provenance::kCoarse);
  }
  const auto front = CameraView::from_camera_pose(Mat3::Identity(), Vec3::Zero(), intrinsics());
  const auto back = CameraView::from_camera_pose(yaw(180.0), Vec3::Zero(), intrinsics());
  CHECK(verify_disjoint(scene, front, back));
}

TEST_CASE("verify_disjoint: one shared visible primitive breaks disjointness") {
  const auto left = CameraView::from_camera_pose(yaw(-25.0), Vec3::Zero(), intrinsics());
  const auto right = CameraView::from_camera_pose(yaw(25.0), Vec3::Zero(), intrinsics());
  GaussianScene scene;
  scene.add(blob({-2.5, 0.0, 2.0}), Provenance::kCoarse);  // left only
  scene.add(blob({2.5, 0.0, 2.0}), Provenance::kCoarse);   // right only
  CHECK(verify_disjoint(scene, left, right));
  scene.add(blob({0.0, 0.0, 4.0}), Provenance::kCoarse);  // straight ahead, seen by both
  CHECK_FALSE(verify_disjoint(scene, left, right));

  // Hidden behind a small wall in front of one camera only: still disjoint.
  const auto l2 = CameraView::from_camera_pose(Mat3::Identity(), Vec3(-1.5, 0.0, 0.0), intrinsics());
  const auto r2 = CameraView::from_camera_pose(Mat3::Identity(), Vec3(1.5, 0.0, 0.0), intrinsics());
  GaussianScene shared;
  shared.add(blob({0.0, 0.0, 4.0}), Provenance::kCoarse);
  CHECK_FALSE(verify_disjoint(shared, l2, r2));
  GaussianScene occluded = shared;
  const Vec3 toward = (Vec3(0.0, 0.0, 4.0) - r2.center()).normalized();
  const Vec3 side = toward.cross(Vec3::UnitY()).normalized();
  for (int y = -6; y <= 6; ++y) {
    for (int x = -6; x <= 6; ++x) {
      GaussianPrimitive w = blob(r2.center() + 1.0 * toward + 0.03 * x * side + 0.03 * y * Vec3::UnitY());
      w.log_scale = Vec3::Constant(std::log(0.03));
      w.opacity_logit = 6.0;
      occluded.add(w, Provenance::kCoarse);
    }
  }
  CHECK(verify_disjoint(occluded, l2, r2));
}

TEST_CASE("generate is deterministic and its pair is disjoint") {
  SyntheticSceneSpec spec;
  spec.seed = 3;
  spec.primitive_count = 1500;
  spec.image_size = 32;
  const auto a = generate(spec);
  const auto b = generate(spec);
  CHECK(a.ground_truth == b.ground_truth);
  CHECK(encode_png_rgb8(a.pair_images[0]) == encode_png_rgb8(b.pair_images[0]));
  CHECK(encode_ppmp(a.pointmaps[2]) == encode_ppmp(b.pointmaps[2]));
  CHECK(verify_disjoint(a.ground_truth, a.views[0], a.views[2]));
  CHECK(a.pointmaps.size() == 4);
  CHECK(a.pair_images[0].width() == 32);
  CHECK(a.pointmaps[0].pointmap_i.width() == 16);
  spec.seed = 4;
  CHECK_FALSE(generate(spec).ground_truth == a.ground_truth);
}

TEST_CASE("generate refuses separations that cannot be disjoint") {
  SyntheticSceneSpec spec;
  spec.primitive_count = 1500;
  spec.image_size = 32;
  spec.separation_deg = 20.0;
  CHECK_THROWS_AS(generate(spec), CannotSeparate);
}

TEST_CASE("noise-free pointmaps hit the room walls exactly") {
  SyntheticSceneSpec spec;
  spec.seed = 5;
  spec.primitive_count = 1500;
  spec.image_size = 32;
  spec.baseline = 0.6;
  const auto s = generate(spec);
  double worst = 0.0;
  for (const auto& pair : s.pointmaps) {
    for (const auto& [view_id, map] :
         {std::pair{pair.view_i, &pair.pointmap_i}, std::pair{pair.view_j, &pair.pointmap_j}}) {
      const auto& view = s.views[view_id];
      const auto& ref = s.views[pair.view_i];
      const Intrinsics k = view.intrinsics().rescaled(map->width(), map->height());
      for (int y = 0; y < map->height(); ++y) {
        for (int x = 0; x < map->width(); ++x) {
          const Vec3 dir = view.rotation_matrix().transpose() *
                           Vec3((x - k.cx) / k.fx, (y - k.cy) / k.fy, 1.0);
          const Vec3 expected = ref.world_to_camera(wall_hit(spec.extent, view.center(), dir));
          const Vec3 got(map->at(x, y, 0), map->at(x, y, 1), map->at(x, y, 2));
          worst = std::max(worst, (got - expected).norm());
        }
      }
    }
  }
  CHECK(worst <= 1e-6);
}

TEST_CASE("global alignment recovers the generator poses from exact pointmaps") {
  SyntheticSceneSpec spec;
  spec.seed = 9;
  spec.primitive_count = 1500;
  spec.image_size = 32;
  spec.baseline = 0.6;
  const auto s = generate(spec);
  const auto result = global_align(s.pointmaps);
  const auto err = testing::gauge_errors(s.views, result);
  CHECK(err.rotation_deg <= 1e-6);
  CHECK(err.translation <= 1e-6);
}

TEST_CASE("intrinsics are recovered from exact pointmaps") {
  SyntheticSceneSpec spec;
  spec.seed = 4;
  spec.primitive_count = 1500;
  spec.image_size = 48;
  const auto s = generate(spec);
  const auto k = estimate_intrinsics(s.pointmaps, 48, 48);
  const auto& truth = s.views[0].intrinsics();
  CHECK(k.fx == doctest::Approx(truth.fx).epsilon(1e-9));
  CHECK(k.fy == doctest::Approx(truth.fy).epsilon(1e-9));
  CHECK(k.cx == doctest::Approx(truth.cx).epsilon(1e-12));
  CHECK(k.cy == doctest::Approx(truth.cy).epsilon(1e-12));

  auto flat = s.pointmaps[0];
  for (auto& v : flat.confidence_i.data()) v = 0.0;
  CHECK_THROWS_AS(estimate_intrinsics(std::span(&flat, 1), 48, 48), DegenerateConfiguration);
  CHECK_THROWS_AS(estimate_intrinsics({}, 48, 48), DegenerateConfiguration);
}

TEST_CASE("default benchmark seeds are all disjoint") {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    SyntheticSceneSpec spec;
    spec.seed = seed;
    spec.image_size = 32;
    const auto s = generate(spec);
    CHECK(verify_disjoint(s.ground_truth, s.views[0], s.views[2]));
  }
}

TEST_CASE("bundle round trip") {
  SyntheticSceneSpec spec;
  spec.seed = 1;
  spec.primitive_count = 1200;
  spec.image_size = 32;
  const auto s = generate(spec);
  const auto dir = std::filesystem::temp_directory_path() / "glados_bundle_rt";
  std::filesystem::remove_all(dir);
  write_bundle(dir, s, spec);
  for (const char* f : {"gt.ply", "views.json", "pair/view0.png", "pair/view1.png", "pair/poses.json",
                        "pointmaps/pair_0_1.ppmp", "pointmaps/pair_2_1.ppmp"}) {
    CHECK_MESSAGE(std::filesystem::exists(dir / f), f);
  }
  const auto in = read_bundle(dir);
  CHECK(encode_png_rgb8(in.images[1]) == encode_png_rgb8(s.pair_images[1]));
  REQUIRE(in.poses);
  CHECK((*in.poses)[1].rotation_matrix().isApprox(s.views[2].rotation_matrix(), 1e-12));
  REQUIRE(in.pointmap_dir);
  CHECK(encode_ppmp(read_ppmp(*in.pointmap_dir / "pair_1_2.ppmp")) == encode_ppmp(s.pointmaps[2]));
  CHECK(load_scene(dir / "gt.ply").size() == s.ground_truth.size());
  CHECK_THROWS_AS(read_bundle(dir / "nowhere"), MalformedFile);
}
