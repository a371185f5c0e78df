#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "glados/gaussian_scene.hpp"
#include "glados/image.hpp"
#include "glados/pose_math.hpp"
#include "glados/scene_optimizer.hpp"

namespace glados {

// Error reported when no pixel of the render is valid.
inline constexpr double kZeroValidPhotoError = 1.0;
inline constexpr std::size_t kMinScenePrimitives = 100;
inline constexpr double kMinTrajectoryAlpha = 0.1;
inline constexpr double kEvalHoleAlpha = 0.05;

struct PhotometricResult {
  double error = 0.0;
  std::size_t valid_pixels = 0;
  bool zero_valid = false;
};

// Channel-averaged squared error over pixels whose rendered alpha reaches
// 0.5, normalized by the valid pixel count.
PhotometricResult photometric_error(const GaussianScene& scene, const CameraView& view,
                                    const Image& gt);

enum class CoarseFailure { kNone, kDisconnectedGraph, kEmptyAlignment };

// What detect_failure needs to know about a pipeline run.
struct RunRecord {
  CoarseFailure coarse = CoarseFailure::kNone;
  std::optional<std::string> client_error_stage;
  std::size_t final_primitives = 0;
  double mean_trajectory_alpha = 0.0;
};

struct FailureVerdict {
  bool failed = false;
  std::string reason;
};

FailureVerdict detect_failure(const RunRecord& run);

struct EvaluationReport {
  std::string scene_id;
  bool failed = false;
  std::string failure_reason;
  // Metric fields are absent for failed scenes.
  std::optional<double> photo_error;
  std::optional<std::array<double, 2>> photo_errors;  // per input view
  std::optional<double> mean_hole_ratio;
  std::optional<double> mean_alpha;
  std::vector<std::string> frames;  // relative to the evaluation directory
  nlohmann::json extra = nlohmann::json::object();
};

nlohmann::json to_json(const EvaluationReport& report);
EvaluationReport evaluation_report_from_json(const nlohmann::json& j);

// Renders the two ground-truth views and n trajectory poses between them.
// Frames are written as <frames_dir>/frame_0001.png ... when a directory is
// given (paths recorded relative to its parent).
EvaluationReport evaluate_scene(const std::string& scene_id, const GaussianScene& scene,
                                std::span<const Target> gt_pair, int n_trajectory = 200,
                                const std::optional<std::filesystem::path>& frames_dir = {});

EvaluationReport failed_report(const std::string& scene_id, const std::string& reason);

struct AggregateSummary {
  std::size_t scenes = 0;
  std::size_t failed = 0;
  std::optional<double> mean_photo_error;
  std::optional<double> mean_hole_ratio;
  std::vector<EvaluationReport> reports;
};

// Means over non-failed scenes; failed scenes only count as failures.
AggregateSummary aggregate(std::span<const EvaluationReport> reports);

// One row per scene followed by a "mean" row; header only when empty.
std::string to_csv(const AggregateSummary& summary);
std::string to_table(const AggregateSummary& summary);

}  // namespace glados
