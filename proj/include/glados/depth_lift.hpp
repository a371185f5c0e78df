#pragma once

#include <vector>

#include <json.hpp>

#include "glados/gaussian_scene.hpp"
#include "glados/image.hpp"
#include "glados/pose_math.hpp"

namespace glados {

inline constexpr std::size_t kMinAlignmentPixels = 50;
inline constexpr double kTrimFactor = 2.0;
inline constexpr double kInjectedOpacity = 0.8;
inline constexpr int kDefaultStride = 2;

// Maps a predicted depth onto scene depth: d = scale * pred + shift.
struct DepthAlignment {
  double scale = 1.0;
  double shift = 0.0;
  std::size_t inlier_count = 0;
  double rms_residual = 0.0;
  bool degenerate = false;  // constant prediction: shift-only solution
  bool accepted = false;    // scale > 0 and not degenerate
};

nlohmann::json to_json(const DepthAlignment& a);

// Least squares fit of scale*pred + shift to rendered over `valid`, then one
// pass that drops residuals above 2x RMS and re-solves.
// Throws InsufficientValidPixels below 50 usable pixels.
DepthAlignment affine_align(const Image& pred, const Image& rendered, const Mask& valid);

// Pixels where the render is opaque enough to trust its depth and the
// prediction is finite.
Mask alignment_mask(const Image& rendered_alpha, const Image& pred);

// One primitive per masked pixel on the stride grid (u and v multiples of
// stride). Throws RejectedAlignment when the alignment was not accepted.
std::vector<GaussianPrimitive> unproject_masked(const Image& image, const Image& pred_depth,
                                                const DepthAlignment& alignment,
                                                const Mask& mask, const CameraView& view,
                                                int stride = kDefaultStride);

}  // namespace glados
