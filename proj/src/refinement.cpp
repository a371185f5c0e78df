#include "glados/refinement.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "glados/error.hpp"
#include "glados/expansion.hpp"
#include "glados/seeds.hpp"

namespace glados {

void RefinementConfig::validate() const {
  if (cycles < 1) throw InvalidArgument("refinement needs at least one cycle");
  if (!(noise_end >= 0.0 && noise_end <= noise_start && noise_start <= 1.0)) {
    throw InvalidArgument("refinement noise must satisfy 0 <= end <= start <= 1");
  }
  for (int c : {denoise_passes, opt_steps, upscale_factor, stride}) {
    if (c < 1) throw InvalidArgument("refinement counts must be >= 1");
  }
  if (!(hole_alpha_threshold > 0.0 && hole_alpha_threshold < 1.0)) {
    throw InvalidArgument("hole_alpha_threshold must lie in (0,1)");
  }
  if (views_per_step < 0) throw InvalidArgument("views_per_step must be >= 0");
}

nlohmann::json to_json(const RefinementConfig& c) {
  return {{"cycles", c.cycles},
          {"noise_start", c.noise_start},
          {"noise_end", c.noise_end},
          {"denoise_passes", c.denoise_passes},
          {"opt_steps", c.opt_steps},
          {"hole_alpha_threshold", c.hole_alpha_threshold},
          {"upscale_factor", c.upscale_factor},
          {"stride", c.stride},
          {"views_per_step", c.views_per_step}};
}

double noise_level(int cycle, const RefinementConfig& config) {
  if (cycle < 1 || cycle > config.cycles) {
    throw OutOfRange("cycle " + std::to_string(cycle) + " outside 1.." +
                     std::to_string(config.cycles));
  }
  if (config.cycles == 1) return config.noise_start;
  const double t = static_cast<double>(cycle - 1) / (config.cycles - 1);
  // std::lerp returns both endpoints exactly.
  return std::lerp(config.noise_start, config.noise_end, t);
}

std::string to_string(GridTile tile) {
  switch (tile) {
    case GridTile::kFirstInput:
      return "first_input";
    case GridTile::kSecondInput:
      return "second_input";
    case GridTile::kNovelA:
      return "novel_a";
    case GridTile::kNovelB:
      return "novel_b";
  }
  return "unknown";
}

GridComposite assemble_grid(const Image& gt1, const Image& gt2, const RenderOutput& novel_a,
                            const RenderOutput& novel_b, double alpha_threshold) {
  const int w = gt1.width(), h = gt1.height();
  for (const Image* img : {&gt1, &gt2, &novel_a.rgb, &novel_b.rgb}) {
    if (img->width() != w || img->height() != h || img->channels() != 3) {
      throw DimensionMismatch("grid tiles must share one H x W x 3 shape");
    }
  }
  for (const Image* a : {&novel_a.alpha, &novel_b.alpha}) {
    if (a->width() != w || a->height() != h) throw DimensionMismatch("novel alpha does not match");
  }
  GridComposite g;
  g.tile_width = w;
  g.tile_height = h;
  g.image = Image(2 * w, 2 * h, 3);
  g.mask = Mask(2 * w, 2 * h);
  const std::array<const Image*, 4> tiles = {&gt1, &gt2, &novel_a.rgb, &novel_b.rgb};
  const std::array<Mask, 2> holes = {detect_holes(novel_a, alpha_threshold).mask,
                                     detect_holes(novel_b, alpha_threshold).mask};
  for (int k = 0; k < 4; ++k) {
    const int ox = (k % 2) * w, oy = (k / 2) * h;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        for (int c = 0; c < 3; ++c) g.image.at(ox + x, oy + y, c) = tiles[k]->at(x, y, c);
        if (k >= 2) g.mask.set(ox + x, oy + y, holes[k - 2].at(x, y));
      }
    }
  }
  return g;
}

std::array<Image, 4> disassemble_grid(const Image& composite) {
  if (composite.width() % 2 != 0 || composite.height() % 2 != 0 || composite.empty()) {
    throw DimensionMismatch("grid composite must have even, non-zero dimensions");
  }
  const int w = composite.width() / 2, h = composite.height() / 2, ch = composite.channels();
  std::array<Image, 4> out;
  for (int k = 0; k < 4; ++k) {
    out[k] = Image(w, h, ch);
    const int ox = (k % 2) * w, oy = (k / 2) * h;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        for (int c = 0; c < ch; ++c) out[k].at(x, y, c) = composite.at(ox + x, oy + y, c);
      }
    }
  }
  return out;
}

std::array<Mask, 4> disassemble_grid(const Mask& composite) {
  if (composite.width() % 2 != 0 || composite.height() % 2 != 0 || composite.width() == 0) {
    throw DimensionMismatch("grid mask must have even, non-zero dimensions");
  }
  const int w = composite.width() / 2, h = composite.height() / 2;
  std::array<Mask, 4> out;
  for (int k = 0; k < 4; ++k) {
    out[k] = Mask(w, h);
    const int ox = (k % 2) * w, oy = (k / 2) * h;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) out[k].set(x, y, composite.at(ox + x, oy + y));
    }
  }
  return out;
}

nlohmann::json to_json(const RefinementCycle& c) {
  nlohmann::json j = {{"cycle", c.cycle},
                      {"noise_level", c.noise_level},
                      {"views", c.views},
                      {"hole_ratios", c.hole_ratios},
                      {"injected", c.injected},
                      {"noop", c.noop}};
  nlohmann::json al = nlohmann::json::array();
  for (const auto& a : c.alignments) al.push_back(a ? to_json(*a) : nlohmann::json());
  j["alignments"] = al;
  return j;
}

namespace {

// The two largest hole ratios; ties go to the lower index.
std::array<int, 2> worst_two(const std::vector<double>& ratios) {
  std::vector<int> order(ratios.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return ratios[a] > ratios[b]; });
  return {order[0], order[1]};
}

}  // namespace

RefinementResult refine(const GaussianScene& scene, PriorClients& clients,
                        const RefinementConfig& config, std::span<const Target> inputs,
                        std::span<const Target> anchors, std::span<const CameraView> trajectory,
                        const std::string& prompt, std::uint64_t seed,
                        const std::optional<std::filesystem::path>& artifact_dir) {
  config.validate();
  if (scene.empty()) throw InvalidArgument("cannot refine an empty scene");
  if (inputs.size() != 2) throw InvalidArgument("refinement needs exactly two input views");
  if (trajectory.size() < 2) throw InvalidArgument("refinement needs at least two trajectory views");
  RefinementResult result;
  result.scene = scene;
  std::vector<Target> refined_targets;
  OptimizerConfig fit;
  fit.steps = config.opt_steps;
  fit.views_per_step = config.views_per_step;

  for (int cycle = 1; cycle <= config.cycles; ++cycle) {
    RefinementCycle record;
    record.cycle = cycle;
    record.noise_level = noise_level(cycle, config);
    std::vector<RenderOutput> renders;
    std::vector<double> ratios;
    for (const auto& view : trajectory) {
      renders.push_back(render(result.scene, view));
      ratios.push_back(detect_holes(renders.back(), config.hole_alpha_threshold).hole_ratio);
    }
    record.views = worst_two(ratios);
    record.hole_ratios = {ratios[record.views[0]], ratios[record.views[1]]};
    if (record.hole_ratios[0] == 0.0 && record.hole_ratios[1] == 0.0) {
      record.noop = true;
      result.cycles.push_back(record);
      continue;
    }
    const RenderOutput& novel_a = renders[record.views[0]];
    const RenderOutput& novel_b = renders[record.views[1]];
    const auto grid = assemble_grid(inputs[0].image, inputs[1].image, novel_a, novel_b,
                                    config.hole_alpha_threshold);
    const std::string tag = "refine.cycle_" + std::to_string(cycle);
    GridInpaintParams params;
    params.noise_level = record.noise_level;
    params.denoise_passes = config.denoise_passes;
    params.prompt = prompt;
    const Image inpainted =
        clients.grid_inpaint(grid.image, grid.mask, params, derive_seed(seed, tag + ".grid"));
    const auto tiles = disassemble_grid(inpainted);
    const auto tile_masks = disassemble_grid(grid.mask);

    std::optional<std::filesystem::path> dir;
    if (artifact_dir) {
      dir = *artifact_dir / ("cycle_" + std::to_string(cycle));
      write_png_rgb8(*dir / "grid.png", grid.image);
      write_png_mask(*dir / "mask.png", grid.mask);
      write_png_rgb8(*dir / "inpainted_grid.png", inpainted);
    }
    std::vector<GaussianPrimitive> added;
    for (int n = 0; n < 2; ++n) {
      const int slot = 2 + n;
      const CameraView& view = trajectory[record.views[n]];
      const std::string ntag = tag + (n == 0 ? ".novel_a" : ".novel_b");
      const Image enhanced = downscale_box(
          clients.upscale(tiles[slot], config.upscale_factor, derive_seed(seed, ntag + ".upscale")),
          config.upscale_factor);
      if (dir) write_png_rgb8(*dir / "tiles" / ("tile_" + std::to_string(slot) + ".png"), enhanced);
      if (tile_masks[slot].count() == 0) continue;
      try {
        const HoleLift lift = lift_into_holes(enhanced, renders[record.views[n]], tile_masks[slot],
                                              view, clients, derive_seed(seed, ntag + ".depth"),
                                              config.stride);
        record.alignments[n] = lift.alignment;
        record.injected[n] = lift.primitives.size();
        added.insert(added.end(), lift.primitives.begin(), lift.primitives.end());
      } catch (const RejectedAlignment&) {
      } catch (const InsufficientValidPixels&) {
      }
      refined_targets.push_back({view, enhanced, std::nullopt});
    }
    if (dir) {
      for (int slot = 0; slot < 2; ++slot) {
        write_png_rgb8(*dir / "tiles" / ("tile_" + std::to_string(slot) + ".png"), tiles[slot]);
      }
    }
    result.scene = merge(result.scene, added, Provenance::kRefinement);
    std::vector<Target> targets(anchors.begin(), anchors.end());
    targets.insert(targets.end(), refined_targets.begin(), refined_targets.end());
    auto fitted = optimize(result.scene, targets, fit);
    result.fits.push_back(fit_record("refine", fit, targets.size(), fitted));
    result.fits.back()["cycle"] = cycle;
    result.fits.back()["noise_level"] = record.noise_level;
    result.fits.back()["denoise_passes"] = config.denoise_passes;
    if (dir) {
      write_text_file(*dir / "alignment.json", to_json(record).dump(2));
      write_loss_csv(*dir / "loss.csv", fitted);
    }
    result.scene = std::move(fitted.scene);
    result.cycles.push_back(record);
  }
  return result;
}

}  // namespace glados
