#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <memory>
#include <random>

#include "glados/error.hpp"
#include "glados/expansion.hpp"
#include "glados/refinement.hpp"
#include "random_scenes.hpp"
#include "wall_scene.hpp"

using namespace glados;

namespace {

struct GridRequest {
  Image composite;
  Mask mask;
  GridInpaintParams params;
};

// Delegates to the mock and keeps every request it sees.
class RecordingGrid final : public GridInpainter {
 public:
  explicit RecordingGrid(std::shared_ptr<std::vector<GridRequest>> log)
      : inner_(make_mock_grid_inpainter()), log_(std::move(log)) {}
  Image grid_inpaint(const Image& composite, const Mask& mask, const GridInpaintParams& params,
                     std::uint64_t seed) override {
    log_->push_back({composite, mask, params});
    return inner_->grid_inpaint(composite, mask, params, seed);
  }

 private:
  std::unique_ptr<GridInpainter> inner_;
  std::shared_ptr<std::vector<GridRequest>> log_;
};

RenderOutput constant_render(int w, int h, double rgb, double alpha) {
  RenderOutput out{Image(w, h, 3), Image(w, h, 1), Image(w, h, 1)};
  for (auto& v : out.rgb.data()) v = rgb;
  for (auto& v : out.alpha.data()) v = alpha;
  for (auto& v : out.depth.data()) v = 2.0;
  return out;
}

Image random_image(std::mt19937_64& rng, int w, int h) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image img(w, h, 3);
  for (auto& v : img.data()) v = u(rng);
  return img;
}

bool masked_near(const Mask& mask, const Vec2& pixel, int radius) {
  const int px = static_cast<int>(std::lround(pixel.x()));
  const int py = static_cast<int>(std::lround(pixel.y()));
  for (int y = py - radius; y <= py + radius; ++y) {
    for (int x = px - radius; x <= px + radius; ++x) {
      if (x >= 0 && y >= 0 && x < mask.width() && y < mask.height() && mask.at(x, y)) return true;
    }
  }
  return false;
}

struct HoleFixture {
  GaussianScene scene = testing::wall_scene(3.0, 2.4, 0.0, 0.8);
  CameraView a = testing::identity_view(32);
  CameraView b{UnitQuaternion::identity(), Vec3(-0.6, 0.0, 0.0), a.intrinsics()};
  std::vector<CameraView> trajectory = evaluation_trajectory(a, b, 10);
  std::vector<Target> inputs;

  HoleFixture() {
    const auto truth = testing::wall_scene();
    for (const auto& v : {a, b}) inputs.push_back({v, quantize8(render(truth, v).rgb), std::nullopt});
  }
};

}  // namespace

TEST_CASE("annealed noise schedule") {
  RefinementConfig c;
  CHECK(noise_level(1, c) == 0.20);
  CHECK(noise_level(5, c) == 0.0005);
  CHECK(noise_level(3, c) == doctest::Approx(0.10025).epsilon(1e-12));
  for (int k = 1; k < c.cycles; ++k) CHECK(noise_level(k + 1, c) < noise_level(k, c));
  CHECK_THROWS_AS(noise_level(0, c), OutOfRange);
  CHECK_THROWS_AS(noise_level(6, c), OutOfRange);
  RefinementConfig one;
  one.cycles = 1;
  CHECK(noise_level(1, one) == 0.20);
}

TEST_CASE("refinement config defaults and validation") {
  RefinementConfig c;
  CHECK(c.cycles == 5);
  CHECK(c.denoise_passes == 4);
  CHECK(c.opt_steps == 300);
  CHECK(c.hole_alpha_threshold == 0.05);
  CHECK_NOTHROW(c.validate());
  auto bad = c;
  bad.noise_end = 0.3;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  bad = c;
  bad.cycles = 0;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  bad = c;
  bad.noise_start = 1.5;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
}

TEST_CASE("grid masks cover only the holes of the novel tiles") {
  const Image gt1(6, 4, 3), gt2(6, 4, 3);
  const auto opaque = constant_render(6, 4, 0.5, 1.0);
  const auto empty = constant_render(6, 4, 0.5, 0.0);

  const auto none = assemble_grid(gt1, gt2, opaque, opaque, 0.05);
  CHECK(none.image.width() == 12);
  CHECK(none.image.height() == 8);
  CHECK(none.tile_width == 6);
  CHECK(none.tile_height == 4);
  CHECK(none.mask.count() == 0);

  const auto left = assemble_grid(gt1, gt2, empty, opaque, 0.05);
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 12; ++x) CHECK(left.mask.at(x, y) == (y >= 4 && x < 6));
  }
  CHECK_THROWS_AS(assemble_grid(Image(5, 4, 3), gt2, opaque, opaque, 0.05), DimensionMismatch);
  CHECK_THROWS_AS(assemble_grid(gt1, gt2, constant_render(6, 5, 0.5, 1.0), opaque, 0.05),
                  DimensionMismatch);
}

TEST_CASE("grid tiles round-trip in layout order") {
  std::mt19937_64 rng(41);
  const Image gt1 = random_image(rng, 8, 6), gt2 = random_image(rng, 8, 6);
  RenderOutput na = constant_render(8, 6, 0.0, 1.0), nb = constant_render(8, 6, 0.0, 0.0);
  na.rgb = random_image(rng, 8, 6);
  nb.rgb = random_image(rng, 8, 6);
  const auto grid = assemble_grid(gt1, gt2, na, nb, 0.05);
  const auto tiles = disassemble_grid(grid.image);
  CHECK(tiles[0] == gt1);
  CHECK(tiles[1] == gt2);
  CHECK(tiles[2] == na.rgb);
  CHECK(tiles[3] == nb.rgb);
  const auto masks = disassemble_grid(grid.mask);
  CHECK(masks[0].count() == 0);
  CHECK(masks[1].count() == 0);
  CHECK(masks[2].count() == 0);
  CHECK(masks[3].count() == 48);

  // Fingerprint: slot k filled with k/10 sits where the layout says.
  std::array<Image, 4> filled;
  for (int k = 0; k < 4; ++k) {
    filled[k] = Image(4, 4, 3);
    for (auto& v : filled[k].data()) v = k / 10.0;
  }
  const auto fp = assemble_grid(filled[0], filled[1], {filled[2], Image(4, 4, 1), Image(4, 4, 1)},
                                {filled[3], Image(4, 4, 1), Image(4, 4, 1)}, 0.05);
  CHECK(fp.image.at(1, 1, 0) == 0.0);
  CHECK(fp.image.at(5, 1, 0) == 0.1);
  CHECK(fp.image.at(1, 5, 0) == 0.2);
  CHECK(fp.image.at(5, 5, 0) == 0.3);
  CHECK(fp.layout[2] == GridTile::kNovelA);
  CHECK(to_string(fp.layout[0]) == "first_input");

  const Image random = random_image(rng, 10, 8);
  const auto parts = disassemble_grid(random);
  const auto back = assemble_grid(parts[0], parts[1], {parts[2], Image(5, 4, 1), Image(5, 4, 1)},
                                  {parts[3], Image(5, 4, 1), Image(5, 4, 1)}, 0.05);
  CHECK(back.image == random);
  CHECK_THROWS_AS(disassemble_grid(Image(7, 8, 3)), DimensionMismatch);
  CHECK_THROWS_AS(disassemble_grid(Image(8, 5, 3)), DimensionMismatch);
  CHECK_THROWS_AS(disassemble_grid(Mask(7, 8)), DimensionMismatch);
}

TEST_CASE("a scene without holes makes every cycle a no-op") {
  HoleFixture f;
  const auto scene = testing::wall_scene();
  auto clients = PriorClients::mock();
  RefinementConfig c;
  c.opt_steps = 5;
  const auto result = refine(scene, clients, c, f.inputs, f.inputs, f.trajectory, "a wall", 1);
  REQUIRE(result.cycles.size() == 5);
  for (const auto& cycle : result.cycles) CHECK(cycle.noop);
  CHECK(result.fits.empty());
  CHECK(clients.call_log().empty());
  CHECK(result.scene == scene);
}

TEST_CASE("anchored grid inpainting closes a planar hole") {
  HoleFixture f;
  auto requests = std::make_shared<std::vector<GridRequest>>();
  auto clients = PriorClients::mock();
  clients.set_grid_inpainter(std::make_unique<RecordingGrid>(requests), "mock");
  RefinementConfig c;
  c.opt_steps = 30;
  const double before = mean_hole_ratio(f.scene, f.trajectory, c.hole_alpha_threshold);
  REQUIRE(before > 0.1);

  const auto dir = std::filesystem::temp_directory_path() / "glados_refine_test";
  std::filesystem::remove_all(dir);
  const auto result =
      refine(f.scene, clients, c, f.inputs, f.inputs, f.trajectory, "a wall", 9, dir);
  const double after = mean_hole_ratio(result.scene, f.trajectory, c.hole_alpha_threshold);
  CHECK(after <= before);
  CHECK(after < 0.01);
  REQUIRE(result.cycles.size() == 5);
  CHECK_FALSE(result.cycles[0].noop);
  CHECK(result.cycles[0].hole_ratios[0] >= result.cycles[0].hole_ratios[1]);

  // Anchored-mask invariant, and ground truth passed through unchanged.
  REQUIRE_FALSE(requests->empty());
  for (const auto& r : *requests) {
    const auto masks = disassemble_grid(r.mask);
    CHECK(masks[0].count() == 0);
    CHECK(masks[1].count() == 0);
    const auto tiles = disassemble_grid(r.composite);
    CHECK(tiles[0] == f.inputs[0].image);
    CHECK(tiles[1] == f.inputs[1].image);
    CHECK(r.params.denoise_passes == 4);
  }
  std::size_t grid_calls = 0;
  for (const auto& e : clients.call_log()) {
    if (e["stage"] != "grid_inpaint") continue;
    ++grid_calls;
    CHECK(e["denoise_passes"] == 4);
  }
  CHECK(grid_calls == requests->size());
  CHECK(requests->front().params.noise_level == 0.20);

  // Injection locality: refinement primitives land in some cycle's hole mask.
  std::vector<std::pair<CameraView, Mask>> hole_masks;
  std::size_t r = 0;
  for (const auto& cycle : result.cycles) {
    if (cycle.noop) continue;
    const auto masks = disassemble_grid((*requests)[r++].mask);
    hole_masks.push_back({f.trajectory[cycle.views[0]], masks[2]});
    hole_masks.push_back({f.trajectory[cycle.views[1]], masks[3]});
  }
  std::size_t tagged = 0;
  const auto tags = result.scene.provenance();
  for (std::size_t i = 0; i < result.scene.size(); ++i) {
    if (tags[i] != Provenance::kRefinement) continue;
    ++tagged;
    bool inside = false;
    for (const auto& [view, mask] : hole_masks) {
      const auto proj = try_project(result.scene[i].mean, view);
      inside = inside || (proj && masked_near(mask, proj->pixel, c.stride));
    }
    CHECK(inside);
  }
  CHECK(tagged > 0);

  for (const char* name : {"grid.png", "mask.png", "inpainted_grid.png", "alignment.json",
                           "loss.csv", "tiles/tile_2.png"}) {
    CHECK(std::filesystem::exists(dir / "cycle_1" / name));
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("refine rejects malformed arguments") {
  HoleFixture f;
  auto clients = PriorClients::mock();
  RefinementConfig c;
  CHECK_THROWS_AS(refine(GaussianScene{}, clients, c, f.inputs, f.inputs, f.trajectory, "", 1),
                  InvalidArgument);
  const std::vector<Target> one(f.inputs.begin(), f.inputs.begin() + 1);
  CHECK_THROWS_AS(refine(f.scene, clients, c, one, f.inputs, f.trajectory, "", 1),
                  InvalidArgument);
}
