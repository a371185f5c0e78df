#pragma once

#include <algorithm>
#include <cmath>
#include <span>

#include "glados/scene_optimizer.hpp"

namespace glados::testing {

// Reads or writes parameter k of a primitive in the layout
// mean(3) rotation(4) log_scale(3) opacity(1) color(3).
inline double get_param(const GaussianPrimitive& p, int k) {
  if (k < 3) return p.mean[k];
  if (k < 7) return p.rotation.coeffs()[k - 3];
  if (k < 10) return p.log_scale[k - 7];
  if (k == 10) return p.opacity_logit;
  return p.color[k - 11];
}

inline void set_param(GaussianPrimitive& p, int k, double v) {
  if (k < 3) {
    p.mean[k] = v;
  } else if (k < 7) {
    Eigen::Vector4d q = p.rotation.coeffs();
    q[k - 3] = v;
    p.rotation = UnitQuaternion(q[0], q[1], q[2], q[3]);
  } else if (k < 10) {
    p.log_scale[k - 7] = v;
  } else if (k == 10) {
    p.opacity_logit = v;
  } else {
    p.color[k - 11] = v;
  }
}

inline double analytic(const PrimitiveGradient& g, int k) {
  if (k < 3) return g.mean[k];
  if (k < 7) return g.rotation[k - 3];
  if (k < 10) return g.log_scale[k - 7];
  if (k == 10) return g.opacity_logit;
  return g.color[k - 11];
}

struct GradientCheck {
  double worst = 0.0;
  int checked = 0;
};

// Worst relative error (abs floor 1e-6) of the analytic gradient against
// central differences with h = 1e-4, over every parameter.
inline GradientCheck check_gradients(const GaussianScene& scene, std::span<const Target> targets) {
  const auto lg = loss_gradients(scene, targets);
  GradientCheck out;
  const double h = 1e-4;
  for (std::size_t i = 0; i < scene.size(); ++i) {
    for (int k = 0; k < 14; ++k) {
      GaussianScene plus = scene, minus = scene;
      const double v = get_param(scene[i], k);
      set_param(plus[i], k, v + h);
      set_param(minus[i], k, v - h);
      const double fd =
          (photometric_loss(plus, targets) - photometric_loss(minus, targets)) / (2 * h);
      const double a = analytic(lg.gradients[i], k);
      const double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-6});
      out.worst = std::max(out.worst, rel);
      ++out.checked;
    }
  }
  return out;
}

}  // namespace glados::testing
