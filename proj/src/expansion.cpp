#include "glados/expansion.hpp"

#include <algorithm>
#include <cmath>

#include "glados/error.hpp"
#include "glados/seeds.hpp"

namespace glados {

void ExpansionConfig::validate() const {
  if (trajectory.empty()) throw InvalidArgument("expansion trajectory is empty");
  if (subsample < 1) throw InvalidArgument("subsample must be >= 1");
  for (double t : {hole_alpha_threshold, significant_hole_ratio}) {
    if (!(t > 0.0 && t < 1.0)) throw InvalidArgument("expansion thresholds must lie in (0,1)");
  }
  for (int c : {inject_opt_steps, mcs_views, mcs_width, mcs_height, mcs_noise_steps,
                mcs_total_steps, mcs_opt_steps, stride}) {
    if (c < 1) throw InvalidArgument("expansion counts must be >= 1");
  }
  if (mcs_noise_steps > mcs_total_steps) {
    throw InvalidArgument("mcs_noise_steps must not exceed mcs_total_steps");
  }
  if (!(mcs_center_lr > 0.0)) throw InvalidArgument("mcs_center_lr must be positive");
  if (views_per_step < 0) throw InvalidArgument("views_per_step must be >= 0");
}

std::vector<int> ExpansionConfig::expansion_indices() const {
  const int n = static_cast<int>(trajectory.size());
  return uniform_indices(n, std::max(1, n / subsample));
}

nlohmann::json to_json(const ExpansionConfig& c) {
  return {{"trajectory_views", c.trajectory.size()},
          {"subsample", c.subsample},
          {"hole_alpha_threshold", c.hole_alpha_threshold},
          {"significant_hole_ratio", c.significant_hole_ratio},
          {"inject_opt_steps", c.inject_opt_steps},
          {"mcs_views", c.mcs_views},
          {"mcs_resolution", {c.mcs_width, c.mcs_height}},
          {"mcs_noise_steps", c.mcs_noise_steps},
          {"mcs_total_steps", c.mcs_total_steps},
          {"mcs_opt_steps", c.mcs_opt_steps},
          {"mcs_center_lr", c.mcs_center_lr},
          {"stride", c.stride},
          {"views_per_step", c.views_per_step}};
}

std::vector<int> uniform_indices(int n, int count) {
  if (n < 1 || count < 1) throw InvalidArgument("uniform_indices needs n, count >= 1");
  if (count > n) throw InvalidArgument("cannot pick more indices than available");
  std::vector<int> out;
  for (int k = 0; k < count; ++k) {
    out.push_back(static_cast<int>(std::floor((k + 0.5) * n / count)));
  }
  return out;
}

HoleMap detect_holes(const RenderOutput& out, double alpha_threshold) {
  const int w = out.alpha.width(), h = out.alpha.height();
  HoleMap holes{Mask(w, h), 0.0};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) holes.mask.set(x, y, out.alpha.at(x, y) < alpha_threshold);
  }
  if (w * h > 0) {
    holes.hole_ratio = static_cast<double>(holes.mask.count()) / holes.mask.pixel_count();
  }
  return holes;
}

double mean_hole_ratio(const GaussianScene& scene, std::span<const CameraView> views,
                       double alpha_threshold) {
  if (views.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& v : views) sum += detect_holes(render(scene, v), alpha_threshold).hole_ratio;
  return sum / static_cast<double>(views.size());
}

std::string to_string(ExpansionOutcome outcome) {
  switch (outcome) {
    case ExpansionOutcome::kSkippedNoHole:
      return "skipped-no-hole";
    case ExpansionOutcome::kInpainted:
      return "inpainted";
    case ExpansionOutcome::kSkippedError:
      return "skipped-error";
  }
  return "unknown";
}

nlohmann::json to_json(const ExpansionEvent& e) {
  nlohmann::json j = {{"trajectory_index", e.trajectory_index},
                      {"outcome", to_string(e.outcome)},
                      {"hole_ratio", e.hole_ratio},
                      {"injected", e.injected}};
  if (e.alignment) j["alignment"] = to_json(*e.alignment);
  if (!e.detail.empty()) j["detail"] = e.detail;
  return j;
}

nlohmann::json fit_record(const std::string& stage, const OptimizerConfig& config,
                          std::size_t target_count, const OptimizeResult& result) {
  return {{"stage", stage},
          {"steps", config.steps},
          {"lr_mean", config.lr_mean},
          {"lr_rotation", config.lr_rotation},
          {"lr_log_scale", config.lr_log_scale},
          {"lr_opacity", config.lr_opacity},
          {"lr_color", config.lr_color},
          {"views_per_step", config.views_per_step},
          {"targets", target_count},
          {"primitives", result.scene.size()},
          {"final_loss", result.final_loss}};
}

HoleLift lift_into_holes(const Image& rgb, const RenderOutput& rendered, const Mask& holes,
                     const CameraView& view, PriorClients& clients, std::uint64_t seed,
                     int stride) {
  DepthHint hint{rendered.depth, Mask(view.width(), view.height())};
  for (int y = 0; y < view.height(); ++y) {
    for (int x = 0; x < view.width(); ++x) {
      hint.valid.set(x, y, rendered.alpha.at(x, y) >= kDepthValidAlpha);
    }
  }
  HoleLift lift;
  lift.depth = clients.depth(rgb, &hint, seed);
  lift.alignment = affine_align(lift.depth, rendered.depth, alignment_mask(rendered.alpha, lift.depth));
  lift.primitives = unproject_masked(rgb, lift.depth, lift.alignment, holes, view, stride);
  return lift;
}

namespace {

std::vector<Target> join(std::span<const Target> a, std::span<const Target> b) {
  std::vector<Target> out(a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

}  // namespace

ExpansionResult expand(const GaussianScene& scene, PriorClients& clients,
                       const ExpansionConfig& config, const std::string& prompt,
                       std::span<const Target> anchors, std::uint64_t seed,
                       const std::optional<std::filesystem::path>& artifact_dir) {
  config.validate();
  if (scene.empty()) throw InvalidArgument("cannot expand an empty scene");
  ExpansionResult result;
  result.scene = scene;
  OptimizerConfig fit;
  fit.steps = config.inject_opt_steps;
  fit.views_per_step = config.views_per_step;

  for (int index : config.expansion_indices()) {
    const CameraView& view = config.trajectory[index];
    const auto rendered = render(result.scene, view);
    const auto holes = detect_holes(rendered, config.hole_alpha_threshold);
    ExpansionEvent event;
    event.trajectory_index = index;
    event.hole_ratio = holes.hole_ratio;
    std::optional<std::filesystem::path> dir;
    if (artifact_dir) {
      dir = *artifact_dir / ("view_" + std::to_string(index));
      write_png_rgb8(*dir / "render.png", rendered.rgb);
      write_png_gray16(*dir / "alpha.png", rendered.alpha);
      write_png_mask(*dir / "mask.png", holes.mask);
    }
    if (holes.hole_ratio <= config.significant_hole_ratio) {
      result.events.push_back(event);
      continue;
    }
    const std::string tag = "expand.view_" + std::to_string(index);
    try {
      const Image inpainted =
          clients.inpaint(rendered.rgb, holes.mask, prompt, derive_seed(seed, tag + ".inpaint"));
      const HoleLift lift = lift_into_holes(inpainted, rendered, holes.mask, view, clients,
                                        derive_seed(seed, tag + ".depth"), config.stride);
      event.alignment = lift.alignment;
      if (dir) {
        write_png_rgb8(*dir / "inpainted.png", inpainted);
        write_depth(*dir / "depth.dpth", lift.depth);
      }
      result.scene = merge(result.scene, lift.primitives, Provenance::kExpansion);
      event.injected = lift.primitives.size();
      event.outcome = ExpansionOutcome::kInpainted;
      result.inpainted_targets.push_back({view, inpainted, std::nullopt});
    } catch (const ClientError& e) {
      event.outcome = ExpansionOutcome::kSkippedError;
      event.detail = e.what();
    } catch (const RejectedAlignment& e) {
      event.outcome = ExpansionOutcome::kSkippedError;
      event.detail = e.what();
    } catch (const InsufficientValidPixels& e) {
      event.outcome = ExpansionOutcome::kSkippedError;
      event.detail = e.what();
    }
    if (dir && event.alignment) write_text_file(*dir / "alignment.json", to_json(*event.alignment).dump(2));
    if (event.outcome == ExpansionOutcome::kInpainted) {
      const auto targets = join(anchors, result.inpainted_targets);
      auto fitted = optimize(result.scene, targets, fit);
      result.fits.push_back(fit_record("expand", fit, targets.size(), fitted));
      result.fits.back()["trajectory_index"] = index;
      result.scene = std::move(fitted.scene);
    }
    result.events.push_back(event);
  }
  return result;
}

McsResult mcs_refine(const GaussianScene& scene, PriorClients& clients,
                     const ExpansionConfig& config, std::span<const Target> anchors,
                     std::uint64_t seed, const std::optional<std::filesystem::path>& artifact_dir) {
  config.validate();
  if (scene.empty()) throw InvalidArgument("cannot refine an empty scene");
  McsResult result;
  result.view_indices = uniform_indices(static_cast<int>(config.trajectory.size()), config.mcs_views);
  std::vector<CameraView> views;
  std::vector<Image> renders;
  for (int index : result.view_indices) {
    const auto& base = config.trajectory[index];
    views.push_back(base.with_intrinsics(base.intrinsics().rescaled(config.mcs_width, config.mcs_height)));
    renders.push_back(render(scene, views.back()).rgb);
  }
  ConsistencyParams params;
  params.noise_steps = config.mcs_noise_steps;
  params.total_steps = config.mcs_total_steps;
  params.guidance = false;
  const auto rectified = clients.rectify(renders, params, derive_seed(seed, "mcs.consistency"));
  for (std::size_t k = 0; k < views.size(); ++k) {
    result.rectified.push_back({views[k], rectified[k], std::nullopt});
    if (artifact_dir) {
      const auto dir = *artifact_dir / ("view_" + std::to_string(result.view_indices[k]));
      write_png_rgb8(dir / "render.png", renders[k]);
      write_png_rgb8(dir / "rectified.png", rectified[k]);
    }
  }
  OptimizerConfig fit;
  fit.steps = config.mcs_opt_steps;
  fit.lr_mean = config.mcs_center_lr;
  fit.views_per_step = config.views_per_step;
  const auto targets = join(result.rectified, anchors);
  auto fitted = optimize(scene, targets, fit);
  result.fit = fit_record("mcs", fit, targets.size(), fitted);
  result.fit["mcs_views"] = config.mcs_views;
  result.fit["noise_steps"] = params.noise_steps;
  result.fit["total_steps"] = params.total_steps;
  result.fit["guidance"] = params.guidance;
  if (artifact_dir) write_loss_csv(*artifact_dir / "loss.csv", fitted);
  result.scene = std::move(fitted.scene);
  return result;
}

}  // namespace glados
