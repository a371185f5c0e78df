#pragma once

#include <span>
#include <vector>

#include "glados/gaussian_scene.hpp"
#include "glados/image.hpp"
#include "glados/pose_math.hpp"

namespace glados {

// Screen-space dilation added to every projected covariance (px^2).
inline constexpr double kScreenBlur = 0.3;
inline constexpr double kMaxSplatAlpha = 0.999;
// Squared Mahalanobis radius of the splat footprint (3 sigma).
inline constexpr double kFootprintCutoff = 9.0;
// Primitives whose mean is closer than this to the camera plane are skipped.
inline constexpr double kNearPlane = 0.01;
// The projection Jacobian is evaluated with x/z and y/z clamped to this
// multiple of the half-image tangent, so splats far outside the view cannot
// blow up into screen-filling footprints.
inline constexpr double kJacobianGuard = 1.3;
inline constexpr int kTileSize = 16;
// Rendered depth is treated as valid where accumulated alpha reaches this.
inline constexpr double kDepthValidAlpha = 0.5;

struct RenderOutput {
  Image rgb;    // H x W x 3, premultiplied over a black background
  Image depth;  // H x W, alpha-normalized expected camera depth
  Image alpha;  // H x W, 1 - prod(1 - alpha_i)
};

// Footprint weight of a splat at squared Mahalanobis distance m: a Gaussian
// shifted and rescaled so it reaches zero with zero slope at the 3-sigma
// cutoff and equals 1 at the centre. Exposed for the reference renderer.
double splat_kernel(double m);
double splat_kernel_derivative(double m);

// Tile-based EWA splatting. Output is independent of tile decomposition,
// thread count and primitive storage order.
RenderOutput render(const GaussianScene& scene, const CameraView& view);

// Brute-force oracle: every pixel composites every globally depth-sorted
// primitive, inverting the projected covariance explicitly. Test use only.
RenderOutput render_reference(const GaussianScene& scene, const CameraView& view);

// Gradient of a scalar loss with respect to one primitive's parameters.
// `rotation` is with respect to the raw (w,x,y,z) coefficients, projected
// onto the tangent space of the unit sphere.
struct PrimitiveGradient {
  Vec3 mean = Vec3::Zero();
  Eigen::Vector4d rotation = Eigen::Vector4d::Zero();
  Vec3 log_scale = Vec3::Zero();
  double opacity_logit = 0.0;
  Vec3 color = Vec3::Zero();

  PrimitiveGradient& operator+=(const PrimitiveGradient& o);
  bool all_finite() const;
};

// Back-propagates dL/d(rgb) (H x W x 3) through render(scene, view) and adds
// the result into `gradients` (one entry per primitive).
void render_backward(const GaussianScene& scene, const CameraView& view,
                     const Image& rgb_gradient,
                     std::span<PrimitiveGradient> gradients);

}  // namespace glados
