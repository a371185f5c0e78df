#pragma once

#include <cmath>

#include "glados/gaussian_scene.hpp"
#include "glados/pose_math.hpp"

namespace glados::testing {

inline constexpr double kSlantX = 0.05;
inline constexpr double kSlantY = 0.037;

// Slightly slanted wall of flat discs around depth z, optionally with a
// vertical gap of discs removed for gap_lo <= x < gap_hi. The slant keeps disc
// depths distinct, so sort order is stable under small parameter updates, and
// gives the rendered depth a gradient for affine alignment.
inline GaussianScene wall_scene(double z = 3.0, double half_width = 2.4, double gap_lo = 0.0,
                                double gap_hi = 0.0, double spacing = 0.1) {
  GaussianScene scene;
  const int n = static_cast<int>(std::round(2.0 * half_width / spacing));
  for (int i = 0; i <= n; ++i) {
    for (int j = 0; j <= n; ++j) {
      const double x = -half_width + i * spacing, y = -half_width + j * spacing;
      if (x >= gap_lo && x < gap_hi) continue;
      GaussianPrimitive p;
      p.mean = {x, y, z + kSlantX * x + kSlantY * y};
      p.log_scale = Vec3(std::log(0.8 * spacing), std::log(0.8 * spacing), std::log(0.01));
      p.opacity_logit = logit(0.95);
      const bool odd = ((i / 4) + (j / 4)) % 2 == 1;
      p.color = odd ? Vec3(0.8, 0.3, 0.2) : Vec3(0.2, 0.5, 0.7);
      scene.add(p, Provenance::kCoarse);
    }
  }
  return scene;
}

}  // namespace glados::testing
