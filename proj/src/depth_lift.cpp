#include "glados/depth_lift.hpp"

#include <cmath>

#include "glados/error.hpp"
#include "glados/rasterizer.hpp"

namespace glados {

namespace {

struct Sample {
  double pred;
  double target;
};

struct Fit {
  double scale = 1.0;
  double shift = 0.0;
  bool degenerate = false;
};

Fit solve(const std::vector<Sample>& samples) {
  const double n = static_cast<double>(samples.size());
  double mp = 0.0, mt = 0.0;
  for (const auto& s : samples) {
    mp += s.pred;
    mt += s.target;
  }
  mp /= n;
  mt /= n;
  double spp = 0.0, spt = 0.0;
  for (const auto& s : samples) {
    spp += (s.pred - mp) * (s.pred - mp);
    spt += (s.pred - mp) * (s.target - mt);
  }
  // Centred sums avoid the cancellation of the normal equations.
  if (!(spp > 1e-24 * std::max(1.0, mp * mp) * n)) return {1.0, mt - mp, true};
  const double scale = spt / spp;
  return {scale, mt - scale * mp, false};
}

double rms(const std::vector<Sample>& samples, const Fit& f) {
  double sum = 0.0;
  for (const auto& s : samples) {
    const double r = f.scale * s.pred + f.shift - s.target;
    sum += r * r;
  }
  return std::sqrt(sum / static_cast<double>(samples.size()));
}

}  // namespace

DepthAlignment affine_align(const Image& pred, const Image& rendered, const Mask& valid) {
  if (pred.width() != rendered.width() || pred.height() != rendered.height() ||
      valid.width() != pred.width() || valid.height() != pred.height()) {
    throw DimensionMismatch("affine_align: depth maps and mask differ in size");
  }
  std::vector<Sample> samples;
  for (int y = 0; y < pred.height(); ++y) {
    for (int x = 0; x < pred.width(); ++x) {
      const double p = pred.at(x, y), r = rendered.at(x, y);
      if (valid.at(x, y) && std::isfinite(p) && std::isfinite(r)) samples.push_back({p, r});
    }
  }
  if (samples.size() < kMinAlignmentPixels) {
    throw InsufficientValidPixels("affine_align: " + std::to_string(samples.size()) +
                                  " valid pixels, need " + std::to_string(kMinAlignmentPixels));
  }
  Fit fit = solve(samples);
  const double first_rms = rms(samples, fit);
  std::vector<Sample> kept;
  for (const auto& s : samples) {
    if (std::abs(fit.scale * s.pred + fit.shift - s.target) <= kTrimFactor * first_rms) {
      kept.push_back(s);
    }
  }
  if (kept.size() >= kMinAlignmentPixels && kept.size() < samples.size()) {
    fit = solve(kept);
  } else {
    kept = samples;
  }
  DepthAlignment out;
  out.scale = fit.scale;
  out.shift = fit.shift;
  out.degenerate = fit.degenerate;
  out.inlier_count = kept.size();
  out.rms_residual = rms(kept, fit);
  out.accepted = !fit.degenerate && fit.scale > 0.0 && std::isfinite(fit.shift);
  return out;
}

nlohmann::json to_json(const DepthAlignment& a) {
  return {{"scale", a.scale},
          {"shift", a.shift},
          {"inlier_count", a.inlier_count},
          {"rms_residual", a.rms_residual},
          {"degenerate", a.degenerate},
          {"accepted", a.accepted}};
}

Mask alignment_mask(const Image& rendered_alpha, const Image& pred) {
  if (rendered_alpha.width() != pred.width() || rendered_alpha.height() != pred.height()) {
    throw DimensionMismatch("alignment_mask: alpha and prediction differ in size");
  }
  Mask m(pred.width(), pred.height());
  for (int y = 0; y < pred.height(); ++y) {
    for (int x = 0; x < pred.width(); ++x) {
      m.set(x, y, rendered_alpha.at(x, y) >= kDepthValidAlpha && std::isfinite(pred.at(x, y)));
    }
  }
  return m;
}

std::vector<GaussianPrimitive> unproject_masked(const Image& image, const Image& pred_depth,
                                                const DepthAlignment& alignment,
                                                const Mask& mask, const CameraView& view,
                                                int stride) {
  if (!alignment.accepted) throw RejectedAlignment("depth alignment was not accepted");
  if (stride < 1) throw InvalidArgument("stride must be >= 1");
  const int w = view.width(), h = view.height();
  if (image.width() != w || image.height() != h || image.channels() != 3 ||
      pred_depth.width() != w || pred_depth.height() != h || mask.width() != w ||
      mask.height() != h) {
    throw DimensionMismatch("unproject_masked: inputs do not match the view");
  }
  const double fx = view.intrinsics().fx;
  std::vector<GaussianPrimitive> out;
  for (int v = 0; v < h; v += stride) {
    for (int u = 0; u < w; u += stride) {
      if (!mask.at(u, v)) continue;
      const double d = alignment.scale * pred_depth.at(u, v) + alignment.shift;
      if (!std::isfinite(d) || d <= kBehindCameraEpsilon) continue;
      GaussianPrimitive p;
      p.mean = unproject(Vec2(u, v), d, view);
      p.log_scale = Vec3::Constant(std::log(d * stride / fx));
      p.opacity_logit = logit(kInjectedOpacity);
      for (int c = 0; c < 3; ++c) p.color[c] = std::clamp(image.at(u, v, c), 0.0, 1.0);
      out.push_back(p);
    }
  }
  return out;
}

}  // namespace glados
