#include "glados/scene_optimizer.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>

namespace glados {

void OptimizerConfig::validate() const {
  if (steps < 1) throw InvalidArgument("optimizer steps must be >= 1");
  if (views_per_step < 0) throw InvalidArgument("views_per_step must be >= 0");
  for (double lr : {lr_mean, lr_rotation, lr_log_scale, lr_opacity, lr_color}) {
    if (!(lr > 0.0)) throw InvalidArgument("learning rates must be positive");
  }
}

namespace {

void check_target(const Target& t) {
  if (t.image.width() != t.view.width() || t.image.height() != t.view.height() ||
      t.image.channels() != 3) {
    throw DimensionMismatch("target image does not match its view");
  }
  if (t.mask && (t.mask->width() != t.view.width() || t.mask->height() != t.view.height())) {
    throw DimensionMismatch("target mask does not match its view");
  }
}

std::size_t mask_count(const Target& t) {
  return t.mask ? t.mask->count() : t.image.pixel_count();
}

bool in_mask(const Target& t, int x, int y) { return !t.mask || t.mask->at(x, y); }

std::size_t active_views(std::span<const Target> targets) {
  std::size_t n = 0;
  for (const auto& t : targets) {
    check_target(t);
    if (mask_count(t) > 0) ++n;
  }
  return n;
}

double view_loss(const RenderOutput& out, const Target& t) {
  double sum = 0.0;
  for (int y = 0; y < t.image.height(); ++y) {
    for (int x = 0; x < t.image.width(); ++x) {
      if (!in_mask(t, x, y)) continue;
      for (int c = 0; c < 3; ++c) {
        const double d = out.rgb.at(x, y, c) - t.image.at(x, y, c);
        sum += d * d;
      }
    }
  }
  return sum / (3.0 * static_cast<double>(mask_count(t)));
}

}  // namespace

double photometric_loss(const GaussianScene& scene, std::span<const Target> targets) {
  const std::size_t views = active_views(targets);
  if (views == 0) return 0.0;
  double total = 0.0;
  for (const auto& t : targets) {
    if (mask_count(t) == 0) continue;
    total += view_loss(render(scene, t.view), t);
  }
  return total / static_cast<double>(views);
}

LossGradients loss_gradients(const GaussianScene& scene, std::span<const Target> targets,
                             const std::set<Provenance>& frozen) {
  LossGradients out;
  out.gradients.assign(scene.size(), PrimitiveGradient{});
  const std::size_t views = active_views(targets);
  if (views == 0) return out;
  for (const auto& t : targets) {
    const std::size_t count = mask_count(t);
    if (count == 0) continue;
    const RenderOutput rendered = render(scene, t.view);
    out.loss += view_loss(rendered, t);
    const double scale = 2.0 / (3.0 * static_cast<double>(count) * static_cast<double>(views));
    Image grad(t.image.width(), t.image.height(), 3);
    for (int y = 0; y < grad.height(); ++y) {
      for (int x = 0; x < grad.width(); ++x) {
        if (!in_mask(t, x, y)) continue;
        for (int c = 0; c < 3; ++c) {
          grad.at(x, y, c) = scale * (rendered.rgb.at(x, y, c) - t.image.at(x, y, c));
        }
      }
    }
    render_backward(scene, t.view, grad, out.gradients);
  }
  out.loss /= static_cast<double>(views);
  if (!frozen.empty()) {
    const auto tags = scene.provenance();
    for (std::size_t i = 0; i < scene.size(); ++i) {
      if (frozen.contains(tags[i])) out.gradients[i] = PrimitiveGradient{};
    }
  }
  return out;
}

namespace {

constexpr int kParamsPerPrimitive = 14;

// Flat parameter layout: mean(3) rotation(4) log_scale(3) opacity(1) color(3).
void flatten(const PrimitiveGradient& g, double* out) {
  for (int i = 0; i < 3; ++i) out[i] = g.mean[i];
  for (int i = 0; i < 4; ++i) out[3 + i] = g.rotation[i];
  for (int i = 0; i < 3; ++i) out[7 + i] = g.log_scale[i];
  out[10] = g.opacity_logit;
  for (int i = 0; i < 3; ++i) out[11 + i] = g.color[i];
}

}  // namespace

OptimizeResult optimize(const GaussianScene& scene, std::span<const Target> targets,
                        const OptimizerConfig& config) {
  config.validate();
  const std::array<double, kParamsPerPrimitive> lr = {
      config.lr_mean,      config.lr_mean,      config.lr_mean,     config.lr_rotation,
      config.lr_rotation,  config.lr_rotation,  config.lr_rotation, config.lr_log_scale,
      config.lr_log_scale, config.lr_log_scale, config.lr_opacity,  config.lr_color,
      config.lr_color,     config.lr_color};
  const double min_log_scale = std::log(kMinScale) + 1e-9;
  const double max_log_scale = std::log(kMaxScale) - 1e-9;

  OptimizeResult result{scene, {}, 0.0};
  GaussianScene& current = result.scene;
  const std::size_t n = current.size();
  std::vector<double> m1(n * kParamsPerPrimitive, 0.0);
  std::vector<double> m2(n * kParamsPerPrimitive, 0.0);
  const auto tags = scene.provenance();
  double bias1 = 1.0, bias2 = 1.0;
  GaussianScene last_finite = current;

  const std::size_t per_step =
      config.views_per_step == 0 ? targets.size()
                                 : std::min<std::size_t>(config.views_per_step, targets.size());
  std::vector<Target> batch;
  std::size_t cursor = 0;
  // Full-batch fits return their lowest-loss iterate.
  const bool full_batch = per_step == targets.size();
  std::optional<GaussianScene> best;
  double best_loss = std::numeric_limits<double>::infinity();

  for (int step = 1; step <= config.steps; ++step) {
    std::span<const Target> step_targets = targets;
    if (per_step < targets.size()) {
      batch.clear();
      for (std::size_t j = 0; j < per_step; ++j) batch.push_back(targets[(cursor + j) % targets.size()]);
      cursor = (cursor + per_step) % targets.size();
      step_targets = batch;
    }
    LossGradients lg = loss_gradients(current, step_targets, config.frozen_provenance);
    bool finite = std::isfinite(lg.loss);
    if (finite) last_finite = current;
    for (std::size_t i = 0; finite && i < n; ++i) finite = lg.gradients[i].all_finite();
    if (!finite) {
      throw OptimizationAborted(
          "non-finite loss or gradient at step " + std::to_string(step), last_finite);
    }
    result.losses.push_back(lg.loss);
    if (full_batch && lg.loss < best_loss) {
      best_loss = lg.loss;
      best = current;
    }
    bias1 *= config.beta1;
    bias2 *= config.beta2;

    auto prims = current.mutable_primitives();
    for (std::size_t i = 0; i < n; ++i) {
      if (config.frozen_provenance.contains(tags[i])) continue;
      double g[kParamsPerPrimitive];
      flatten(lg.gradients[i], g);
      double delta[kParamsPerPrimitive];
      double* mom1 = &m1[i * kParamsPerPrimitive];
      double* mom2 = &m2[i * kParamsPerPrimitive];
      for (int k = 0; k < kParamsPerPrimitive; ++k) {
        mom1[k] = config.beta1 * mom1[k] + (1.0 - config.beta1) * g[k];
        mom2[k] = config.beta2 * mom2[k] + (1.0 - config.beta2) * g[k] * g[k];
        const double mhat = mom1[k] / (1.0 - bias1);
        const double vhat = mom2[k] / (1.0 - bias2);
        delta[k] = -lr[k] * mhat / (std::sqrt(vhat) + config.epsilon);
      }
      GaussianPrimitive& p = prims[i];
      for (int k = 0; k < 3; ++k) p.mean[k] += delta[k];
      const Eigen::Vector4d q = p.rotation.coeffs() + Eigen::Vector4d(delta[3], delta[4],
                                                                      delta[5], delta[6]);
      p.rotation = UnitQuaternion(q[0], q[1], q[2], q[3]);
      if (q[0] < 0.0) {
        // Canonicalization flipped the sign; keep the momentum consistent.
        for (int k = 3; k < 7; ++k) mom1[k] = -mom1[k];
      }
      for (int k = 0; k < 3; ++k) {
        p.log_scale[k] = std::clamp(p.log_scale[k] + delta[7 + k], min_log_scale,
                                    max_log_scale);
      }
      p.opacity_logit += delta[10];
      for (int k = 0; k < 3; ++k) p.color[k] = std::clamp(p.color[k] + delta[11 + k], 0.0, 1.0);
    }
  }
  result.final_loss = photometric_loss(current, targets);
  if (!std::isfinite(result.final_loss)) {
    throw OptimizationAborted("non-finite loss after the final step", last_finite);
  }
  if (best && best_loss < result.final_loss) {
    current = std::move(*best);
    result.final_loss = best_loss;
  }
  return result;
}

void write_loss_csv(const std::filesystem::path& path, const OptimizeResult& result) {
  std::ostringstream out;
  out.precision(17);
  out << "step,loss\n";
  for (std::size_t i = 0; i < result.losses.size(); ++i) {
    out << i << "," << result.losses[i] << "\n";
  }
  out << result.losses.size() << "," << result.final_loss << "\n";
  write_text_file(path, out.str());
}

}  // namespace glados
