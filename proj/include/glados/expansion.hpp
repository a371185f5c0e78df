#pragma once

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
#include "glados/pose_math.hpp"
#include "glados/rasterizer.hpp"
#include "glados/scene_optimizer.hpp"

namespace glados {

struct ExpansionConfig {
  // Dense camera path between the two inputs. Expansion visits every
  // `subsample`-th pose (centred strata); MCS samples its views from it too.
  std::vector<CameraView> trajectory;
  int subsample = 10;
  double hole_alpha_threshold = 0.05;
  double significant_hole_ratio = 0.02;
  int inject_opt_steps = 256;
  int mcs_views = 8;
  int mcs_width = 512;
  int mcs_height = 512;
  int mcs_noise_steps = 10;
  int mcs_total_steps = 50;
  int mcs_opt_steps = 2560;
  double mcs_center_lr = 1e-4;
  int stride = kDefaultStride;
  // Targets per optimizer step (0 = all); see OptimizerConfig.
  int views_per_step = 0;

  void validate() const;
  // Trajectory indices visited by expand().
  std::vector<int> expansion_indices() const;
};

nlohmann::json to_json(const ExpansionConfig& config);

// Centred stratified choice of `count` indices out of n: floor((k + 0.5) n / count).
std::vector<int> uniform_indices(int n, int count);

struct HoleMap {
  Mask mask;
  double hole_ratio = 0.0;
};

// Pixels whose accumulated alpha is below the threshold.
HoleMap detect_holes(const RenderOutput& out, double alpha_threshold);

double mean_hole_ratio(const GaussianScene& scene, std::span<const CameraView> views,
                       double alpha_threshold);

enum class ExpansionOutcome { kSkippedNoHole, kInpainted, kSkippedError };

std::string to_string(ExpansionOutcome outcome);

struct ExpansionEvent {
  int trajectory_index = 0;
  ExpansionOutcome outcome = ExpansionOutcome::kSkippedNoHole;
  double hole_ratio = 0.0;
  std::size_t injected = 0;
  std::optional<DepthAlignment> alignment;
  std::string detail;  // error message for skipped-error
};

nlohmann::json to_json(const ExpansionEvent& event);

struct HoleLift {
  DepthAlignment alignment;
  Image depth;
  std::vector<GaussianPrimitive> primitives;
};

// Depth for `rgb` from the depth prior, hinted with the rendered depth where
// alpha >= 0.5, affinely aligned to that depth and unprojected into `holes`.
// Throws ClientError, InsufficientValidPixels or RejectedAlignment.
HoleLift lift_into_holes(const Image& rgb, const RenderOutput& rendered, const Mask& holes,
                         const CameraView& view, PriorClients& clients, std::uint64_t seed,
                         int stride = kDefaultStride);

// One optimizer invocation as recorded in the run log.
nlohmann::json fit_record(const std::string& stage, const OptimizerConfig& config,
                          std::size_t target_count, const OptimizeResult& result);

struct ExpansionResult {
  GaussianScene scene;
  std::vector<ExpansionEvent> events;  // one per visited trajectory view, in order
  std::vector<Target> inpainted_targets;
  std::vector<nlohmann::json> fits;
};

// Warp-and-inpaint over the visited trajectory views. Each view with a
// significant hole is inpainted, depth-estimated, aligned against the
// rendered depth, lifted into its hole and followed by a short fit to the
// anchor targets plus every view inpainted so far. Per-view client and
// alignment failures skip the view. Artifacts go under
// <artifact_dir>/view_<k>/ when a directory is given.
ExpansionResult expand(const GaussianScene& scene, PriorClients& clients,
                       const ExpansionConfig& config, const std::string& prompt,
                       std::span<const Target> anchors, std::uint64_t seed,
                       const std::optional<std::filesystem::path>& artifact_dir = {});

struct McsResult {
  GaussianScene scene;
  std::vector<int> view_indices;
  std::vector<Target> rectified;
  nlohmann::json fit;
};

// Renders mcs_views trajectory views at MCS resolution, rectifies the batch
// through the consistency prior (no guidance) and refits the scene to the
// rectified views plus the anchors with the reduced centre learning rate.
McsResult mcs_refine(const GaussianScene& scene, PriorClients& clients,
                     const ExpansionConfig& config, std::span<const Target> anchors,
                     std::uint64_t seed,
                     const std::optional<std::filesystem::path>& artifact_dir = {});

}  // namespace glados
