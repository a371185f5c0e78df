#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "glados/clients.hpp"
#include "glados/depth_lift.hpp"
#include "glados/gaussian_scene.hpp"
#include "glados/rasterizer.hpp"
#include "glados/scene_optimizer.hpp"

namespace glados {

struct RefinementConfig {
  int cycles = 5;
  double noise_start = 0.20;
  double noise_end = 0.0005;
  int denoise_passes = 4;
  int opt_steps = 300;
  double hole_alpha_threshold = 0.05;
  int upscale_factor = 2;
  int stride = kDefaultStride;
  int views_per_step = 0;

  void validate() const;
};

nlohmann::json to_json(const RefinementConfig& config);

// Linearly annealed starting noise of cycle 1..cycles.
double noise_level(int cycle, const RefinementConfig& config);

// Tile slots in row-major grid order.
enum class GridTile { kFirstInput = 0, kSecondInput = 1, kNovelA = 2, kNovelB = 3 };

std::string to_string(GridTile tile);

struct GridComposite {
  Image image;  // 2H x 2W x 3
  Mask mask;    // 2H x 2W, zero on both input tiles
  int tile_width = 0;
  int tile_height = 0;
  // Slot k (0 top-left, 1 top-right, 2 bottom-left, 3 bottom-right) holds layout[k].
  std::array<GridTile, 4> layout = {GridTile::kFirstInput, GridTile::kSecondInput,
                                    GridTile::kNovelA, GridTile::kNovelB};
};

GridComposite assemble_grid(const Image& gt1, const Image& gt2, const RenderOutput& novel_a,
                            const RenderOutput& novel_b, double alpha_threshold);

// Splits a 2H x 2W image into its four tiles in layout order.
std::array<Image, 4> disassemble_grid(const Image& composite);
std::array<Mask, 4> disassemble_grid(const Mask& composite);

struct RefinementCycle {
  int cycle = 0;
  double noise_level = 0.0;
  std::array<int, 2> views = {0, 0};  // trajectory indices of novel tiles A and B
  std::array<double, 2> hole_ratios = {0.0, 0.0};
  std::array<std::size_t, 2> injected = {0, 0};
  std::array<std::optional<DepthAlignment>, 2> alignments;
  bool noop = false;
};

nlohmann::json to_json(const RefinementCycle& cycle);

struct RefinementResult {
  GaussianScene scene;
  std::vector<RefinementCycle> cycles;
  std::vector<nlohmann::json> fits;
};

// Anchored grid inpainting cycles. `inputs` are the two ground-truth views
// (first, second); `anchors` are every target the fits must keep honouring
// (the inputs among them). Each cycle picks the two trajectory views with
// the largest hole ratio, inpaints them next to the unmasked ground truth,
// super-resolves and lifts only their hole pixels, and refits. Cycles
// without holes are logged no-ops. Artifacts go under
// <artifact_dir>/cycle_<k>/ when a directory is given.
RefinementResult refine(const GaussianScene& scene, PriorClients& clients,
                        const RefinementConfig& config, std::span<const Target> inputs,
                        std::span<const Target> anchors, std::span<const CameraView> trajectory,
                        const std::string& prompt, std::uint64_t seed,
                        const std::optional<std::filesystem::path>& artifact_dir = {});

}  // namespace glados
