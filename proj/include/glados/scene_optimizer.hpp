#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <span>
#include <vector>

#include "glados/error.hpp"
#include "glados/gaussian_scene.hpp"
#include "glados/image.hpp"
#include "glados/rasterizer.hpp"

namespace glados {

// One supervision image. Pixels outside `mask` are ignored.
struct Target {
  CameraView view;
  Image image;
  std::optional<Mask> mask;
};

struct OptimizerConfig {
  int steps = 300;
  double lr_mean = 1.6e-4;
  double lr_rotation = 1e-3;
  double lr_log_scale = 5e-3;
  double lr_opacity = 5e-2;
  double lr_color = 2.5e-3;
  std::set<Provenance> frozen_provenance;
  // Targets per step, taken round-robin; 0 uses every target every step.
  int views_per_step = 0;

  // Adam moments.
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-15;

  void validate() const;
};

// Mean over targets of the masked per-pixel MSE (averaged over channels).
double photometric_loss(const GaussianScene& scene, std::span<const Target> targets);

struct LossGradients {
  double loss = 0.0;
  std::vector<PrimitiveGradient> gradients;  // one per primitive
};

// Analytic gradients of photometric_loss. Primitives whose provenance is in
// `frozen` receive zero gradients.
LossGradients loss_gradients(const GaussianScene& scene, std::span<const Target> targets,
                             const std::set<Provenance>& frozen = {});

// Raised when the loss or a gradient turns non-finite; carries the last
// scene state whose loss was finite.
class OptimizationAborted : public NonFiniteLoss {
 public:
  OptimizationAborted(const std::string& what, GaussianScene last_finite)
      : NonFiniteLoss(what), last_finite_(std::move(last_finite)) {}
  const GaussianScene& last_finite() const noexcept { return last_finite_; }

 private:
  GaussianScene last_finite_;
};

struct OptimizeResult {
  GaussianScene scene;
  std::vector<double> losses;  // loss before each step, over that step's targets
  double final_loss = 0.0;     // loss of the returned scene, over all targets
};

// Runs config.steps Adam steps. When every step sees all targets, the
// lowest-loss iterate is returned (the final one unless the fit drifted).
OptimizeResult optimize(const GaussianScene& scene, std::span<const Target> targets,
                        const OptimizerConfig& config);

// "step,loss" CSV; the final row carries the post-optimization loss.
void write_loss_csv(const std::filesystem::path& path, const OptimizeResult& result);

}  // namespace glados
