#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include <tbb/task_arena.h>

#include "glados/error.hpp"
#include "glados/rasterizer.hpp"
#include "random_scenes.hpp"

using namespace glados;

namespace {

double max_abs_diff(const Image& a, const Image& b) {
  REQUIRE(a.same_shape(b));
  double m = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  }
  return m;
}

GaussianPrimitive flat_disc(const Vec3& mean, const Vec3& color, double opacity) {
  GaussianPrimitive p;
  p.mean = mean;
  p.log_scale = Vec3(std::log(2.0), std::log(2.0), std::log(0.01));
  p.opacity_logit = logit(opacity);
  p.color = color;
  return p;
}

}  // namespace

TEST_CASE("splat kernel is one at the centre and vanishes smoothly at the cutoff") {
  CHECK(splat_kernel(0.0) == doctest::Approx(1.0));
  CHECK(splat_kernel(kFootprintCutoff) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(splat_kernel(10.0) == 0.0);
  CHECK(splat_kernel_derivative(kFootprintCutoff - 1e-12) == doctest::Approx(0.0));
  for (double m = 0.1; m < 9.0; m += 0.37) {
    const double fd = (splat_kernel(m + 1e-6) - splat_kernel(m - 1e-6)) / 2e-6;
    CHECK(splat_kernel_derivative(m) == doctest::Approx(fd).epsilon(1e-6));
    CHECK(splat_kernel(m) < splat_kernel(m - 0.1));
  }
}

TEST_CASE("two overlapping primitives composite front to back") {
  // Large flat discs cover the image centre with alpha ~= opacity.
  GaussianScene scene;
  scene.add(flat_disc({0, 0, 3}, {0, 0, 1}, 0.8), Provenance::kCoarse);
  scene.add(flat_disc({0, 0, 2}, {1, 0, 0}, 0.6), Provenance::kCoarse);
  const auto out = render(scene, testing::identity_view(32));
  const int c = 16;
  // Kernel value at the centre pixel is within 1e-4 of 1 for these scales.
  CHECK(out.rgb.at(c, c, 0) == doctest::Approx(0.6).epsilon(1e-3));
  CHECK(out.rgb.at(c, c, 1) == doctest::Approx(0.0));
  CHECK(out.rgb.at(c, c, 2) == doctest::Approx(0.32).epsilon(1e-3));
  CHECK(out.alpha.at(c, c) == doctest::Approx(0.92).epsilon(1e-3));
  const double expected_depth = (0.6 * 2 + 0.4 * 0.8 * 3) / 0.92;
  CHECK(out.depth.at(c, c) == doctest::Approx(expected_depth).epsilon(1e-3));
}

TEST_CASE("empty scene renders black with zero alpha") {
  const auto out = render(GaussianScene{}, testing::identity_view(20));
  for (double v : out.rgb.data()) CHECK(v == 0.0);
  for (double v : out.alpha.data()) CHECK(v == 0.0);
}

TEST_CASE("primitives behind or on the near plane are skipped") {
  GaussianScene scene;
  scene.add(flat_disc({0, 0, -2}, {1, 1, 1}, 0.9), Provenance::kCoarse);
  scene.add(flat_disc({0, 0, 0.005}, {1, 1, 1}, 0.9), Provenance::kCoarse);
  const auto out = render(scene, testing::identity_view(16));
  for (double v : out.alpha.data()) CHECK(v == 0.0);
}

TEST_CASE("far off-axis primitives near the camera do not flood the image") {
  GaussianScene scene;
  GaussianPrimitive p = flat_disc({5.0, 0.0, 0.02}, {1, 1, 1}, 0.9);
  p.log_scale = Vec3::Constant(std::log(0.05));
  scene.add(p, Provenance::kCoarse);
  const auto view = testing::identity_view(32);
  const auto out = render(scene, view);
  for (double v : out.alpha.data()) CHECK(v == 0.0);

  // Just outside the guard band but large enough to reach the image: the
  // tiled renderer and the oracle agree.
  GaussianScene edge;
  for (int i = 0; i < 6; ++i) {
    GaussianPrimitive q = flat_disc({1.5 + 0.1 * i, 0.3 * (i - 3), 2.0}, {0.2, 0.6, 0.9}, 0.7);
    q.log_scale = Vec3::Constant(std::log(0.5));
    edge.add(q, Provenance::kCoarse);
  }
  const auto a = render(edge, view);
  const auto b = render_reference(edge, view);
  CHECK(max_abs_diff(a.rgb, b.rgb) <= 1e-5);
  CHECK(a.alpha.at(31, 16) > 0.0);
}

TEST_CASE("splat alpha is capped below one") {
  GaussianScene scene;
  auto p = flat_disc({0, 0, 2}, {1, 1, 1}, 0.5);
  p.opacity_logit = 50.0;
  scene.add(p, Provenance::kCoarse);
  const auto out = render(scene, testing::identity_view(16));
  CHECK(out.alpha.at(8, 8) <= kMaxSplatAlpha + 1e-15);
}

TEST_CASE("tiled renderer matches the brute-force oracle") {
  std::mt19937_64 rng(11);
  for (int s = 0; s < 8; ++s) {
    const auto scene = testing::random_scene(rng, 120);
    const auto view = testing::identity_view(64);
    const auto a = render(scene, view);
    const auto b = render_reference(scene, view);
    CHECK(max_abs_diff(a.rgb, b.rgb) <= 1e-5);
    CHECK(max_abs_diff(a.alpha, b.alpha) <= 1e-5);
  }
}

TEST_CASE("rendering is invariant to storage order") {
  std::mt19937_64 rng(12);
  const auto scene = testing::random_scene(rng, 80);
  std::vector<std::size_t> order(scene.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  GaussianScene shuffled;
  for (auto i : order) shuffled.add(scene[i], scene.provenance()[i]);
  const auto view = testing::identity_view(48);
  CHECK(max_abs_diff(render(scene, view).rgb, render(shuffled, view).rgb) <= 1e-12);
}

TEST_CASE("rendering is deterministic across thread counts") {
  std::mt19937_64 rng(13);
  const auto scene = testing::random_scene(rng, 100);
  const auto view = testing::identity_view(64);
  const auto serial = tbb::task_arena(1).execute([&] { return render(scene, view); });
  const auto wide = tbb::task_arena(4).execute([&] { return render(scene, view); });
  CHECK(serial.rgb == wide.rgb);
  CHECK(serial.depth == wide.depth);

  Image grad(64, 64, 3, 0.01);
  std::vector<PrimitiveGradient> g1(scene.size()), g4(scene.size());
  tbb::task_arena(1).execute([&] { render_backward(scene, view, grad, g1); });
  tbb::task_arena(4).execute([&] { render_backward(scene, view, grad, g4); });
  for (std::size_t i = 0; i < scene.size(); ++i) {
    CHECK(g1[i].mean == g4[i].mean);
    CHECK(g1[i].rotation == g4[i].rotation);
    CHECK(g1[i].color == g4[i].color);
  }
}

TEST_CASE("rendered depth of a fronto-parallel disc is its distance") {
  GaussianScene scene;
  scene.add(flat_disc({0, 0, 4}, {1, 1, 1}, 0.9), Provenance::kCoarse);
  const auto out = render(scene, testing::identity_view(16));
  CHECK(out.depth.at(8, 8) == doctest::Approx(4.0));
}

TEST_CASE("render_backward validates gradient shapes") {
  std::mt19937_64 rng(14);
  const auto scene = testing::random_scene(rng, 3);
  std::vector<PrimitiveGradient> g(scene.size());
  CHECK_THROWS_AS(render_backward(scene, testing::identity_view(16), Image(8, 8, 3), g),
                  DimensionMismatch);
  std::vector<PrimitiveGradient> small(1);
  CHECK_THROWS_AS(render_backward(scene, testing::identity_view(16), Image(16, 16, 3), small),
                  DimensionMismatch);
}
