#pragma once

#include <span>

#include "glados/coarse_alignment.hpp"
#include "glados/pose_math.hpp"

namespace glados::testing {

struct GaugeErrors {
  double rotation_deg = 0.0;
  double translation = 0.0;
};

// Compares aligned poses with ground truth after moving the ground truth into
// the gauge frame (view 0 at the identity).
inline GaugeErrors gauge_errors(std::span<const CameraView> truth, const AlignmentResult& r) {
  const Mat3 r0 = truth[0].rotation_matrix();
  const Vec3 c0 = truth[0].center();
  GaugeErrors out;
  for (std::size_t v = 0; v < truth.size(); ++v) {
    const CameraView got = r.camera(static_cast<int>(v), truth[v].intrinsics());
    const Mat3 expected_rot = truth[v].rotation_matrix() * r0.transpose();
    const Vec3 expected_center = r0 * (truth[v].center() - c0);
    const double cos_angle =
        std::clamp(((got.rotation_matrix() * expected_rot.transpose()).trace() - 1.0) / 2.0, -1.0, 1.0);
    out.rotation_deg = std::max(out.rotation_deg, std::acos(cos_angle) * 180.0 / M_PI);
    out.translation = std::max(out.translation, (got.center() - expected_center).norm());
  }
  return out;
}

}  // namespace glados::testing
