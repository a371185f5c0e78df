#pragma once

#include <random>

#include "glados/gaussian_scene.hpp"
#include "glados/pose_math.hpp"

namespace glados::testing {

inline Intrinsics square_intrinsics(int size, double fov_scale = 1.0) {
  const double f = fov_scale * size;
  return {f, f, size / 2.0, size / 2.0, size, size};
}

inline UnitQuaternion random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  return {n(rng), n(rng), n(rng), n(rng)};
}

// Primitives scattered in front of an identity camera, inside its frustum.
inline GaussianScene random_scene(std::mt19937_64& rng, int count, double min_scale = 0.05,
                                  double max_scale = 0.25) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  GaussianScene scene;
  for (int i = 0; i < count; ++i) {
    GaussianPrimitive p;
    const double z = 2.0 + 2.0 * u(rng);
    p.mean = {(u(rng) - 0.5) * 0.8 * z, (u(rng) - 0.5) * 0.8 * z, z};
    p.rotation = random_rotation(rng);
    for (int k = 0; k < 3; ++k) {
      p.log_scale[k] = std::log(min_scale + (max_scale - min_scale) * u(rng));
      p.color[k] = 0.05 + 0.9 * u(rng);
    }
    p.opacity_logit = -2.0 + 4.0 * u(rng);
    scene.add(p, Provenance::kCoarse);
  }
  return scene;
}

inline CameraView identity_view(int size, double fov_scale = 1.0) {
  return {UnitQuaternion::identity(), Vec3::Zero(), square_intrinsics(size, fov_scale)};
}

}  // namespace glados::testing
