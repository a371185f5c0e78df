#include "glados/rasterizer.hpp"

#include <Eigen/Core>
#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <numeric>

#include <tbb/blocked_range.h>
#include <tbb/parallel_for.h>

#include "glados/error.hpp"

namespace glados {

namespace {

const double kKernelTail = std::exp(-0.5 * kFootprintCutoff);
const double kKernelNorm = 1.0 - kKernelTail * (1.0 + 0.5 * kFootprintCutoff);

using Mat23 = Eigen::Matrix<double, 2, 3>;
using Mat2 = Eigen::Matrix2d;

// Screen-space splat data touched by the per-pixel loops.
struct Splat {
  double mx, my;   // projected mean
  double a, b, c;  // conic (inverse 2D covariance)
  double opacity;  // sigmoid(opacity_logit)
  double depth;    // camera-space z of the mean
  double r, g, bl;
};

// Per-splat intermediates kept for the backward pass.
struct SplatGeometry {
  Vec3 cam;
  bool clamp_x = false, clamp_y = false;  // Jacobian guard active
  double tx = 0.0, ty = 0.0;              // guarded x and y used in the Jacobian
  Mat23 jacobian;
  Mat3 sigma;
  Mat2 conic;
};

struct Prepared {
  int width = 0;
  int height = 0;
  int tiles_x = 0;
  int tiles_y = 0;
  std::vector<Splat> splats;          // in front-to-back order
  std::vector<SplatGeometry> geometry;
  std::vector<int> primitive;         // splat -> primitive index
  std::vector<int> tile_offsets;      // CSR over tiles
  std::vector<int> tile_entries;      // splat indices, depth-sorted per tile
};

struct Candidate {
  bool valid = false;
  Splat splat{};
  SplatGeometry geometry{};
  int x0 = 0, x1 = -1, y0 = 0, y1 = -1;  // inclusive pixel bbox
};

struct Guarded {
  double tx, ty;
  bool clamp_x, clamp_y;
};

Guarded guard(const Vec3& cam, const Intrinsics& k) {
  const double lim_x = kJacobianGuard * 0.5 * k.width / k.fx;
  const double lim_y = kJacobianGuard * 0.5 * k.height / k.fy;
  const double nx = cam.x() / cam.z(), ny = cam.y() / cam.z();
  Guarded g{cam.x(), cam.y(), false, false};
  if (std::abs(nx) > lim_x) {
    g.tx = std::copysign(lim_x, nx) * cam.z();
    g.clamp_x = true;
  }
  if (std::abs(ny) > lim_y) {
    g.ty = std::copysign(lim_y, ny) * cam.z();
    g.clamp_y = true;
  }
  return g;
}

Candidate project_primitive(const GaussianPrimitive& p, const Mat3& view_rot,
                            const Vec3& view_t, const Intrinsics& k) {
  Candidate out;
  const Vec3 cam = view_rot * p.mean + view_t;
  if (cam.z() <= kNearPlane) return out;
  const double z = cam.z();
  const double inv_z = 1.0 / z;
  const Guarded g = guard(cam, k);
  Mat23 jac;
  jac << k.fx * inv_z, 0.0, -k.fx * g.tx * inv_z * inv_z, 0.0, k.fy * inv_z,
      -k.fy * g.ty * inv_z * inv_z;
  const Mat3 sigma = covariance(p);
  const Mat23 m = jac * view_rot;
  Mat2 cov = m * sigma * m.transpose();
  cov(0, 1) = cov(1, 0) = 0.5 * (cov(0, 1) + cov(1, 0));
  cov(0, 0) += kScreenBlur;
  cov(1, 1) += kScreenBlur;
  const double det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(0, 1);
  if (!(det > 0.0)) return out;
  const double inv_det = 1.0 / det;
  Mat2 conic;
  conic << cov(1, 1) * inv_det, -cov(0, 1) * inv_det, -cov(0, 1) * inv_det,
      cov(0, 0) * inv_det;

  const double mx = k.fx * cam.x() * inv_z + k.cx;
  const double my = k.fy * cam.y() * inv_z + k.cy;
  const double rx = std::sqrt(kFootprintCutoff * cov(0, 0));
  const double ry = std::sqrt(kFootprintCutoff * cov(1, 1));
  const double fx0 = std::ceil(mx - rx), fx1 = std::floor(mx + rx);
  const double fy0 = std::ceil(my - ry), fy1 = std::floor(my + ry);
  if (fx1 < 0.0 || fy1 < 0.0 || fx0 > k.width - 1 || fy0 > k.height - 1) return out;

  out.valid = true;
  out.x0 = static_cast<int>(std::max(fx0, 0.0));
  out.x1 = static_cast<int>(std::min(fx1, k.width - 1.0));
  out.y0 = static_cast<int>(std::max(fy0, 0.0));
  out.y1 = static_cast<int>(std::min(fy1, k.height - 1.0));
  out.splat = {mx,          my,        conic(0, 0), conic(0, 1), conic(1, 1),
               p.opacity(), z,         p.color.x(), p.color.y(), p.color.z()};
  out.geometry = {cam, g.clamp_x, g.clamp_y, g.tx, g.ty, jac, sigma, conic};
  return out;
}

Prepared prepare(const GaussianScene& scene, const CameraView& view) {
  const auto& k = view.intrinsics();
  const Mat3 rot = view.rotation_matrix();
  const Vec3 t = view.translation();
  const auto prims = scene.primitives();

  std::vector<Candidate> candidates(prims.size());
  tbb::parallel_for(tbb::blocked_range<std::size_t>(0, prims.size(), 256),
                    [&](const tbb::blocked_range<std::size_t>& r) {
                      for (auto i = r.begin(); i != r.end(); ++i) {
                        candidates[i] = project_primitive(prims[i], rot, t, k);
                      }
                    });

  std::vector<int> order;
  order.reserve(prims.size());
  for (std::size_t i = 0; i < prims.size(); ++i) {
    if (candidates[i].valid) order.push_back(static_cast<int>(i));
  }
  std::stable_sort(order.begin(), order.end(), [&](int lhs, int rhs) {
    return candidates[lhs].splat.depth < candidates[rhs].splat.depth;
  });

  Prepared out;
  out.width = k.width;
  out.height = k.height;
  out.tiles_x = (k.width + kTileSize - 1) / kTileSize;
  out.tiles_y = (k.height + kTileSize - 1) / kTileSize;
  const int num_tiles = out.tiles_x * out.tiles_y;
  out.splats.reserve(order.size());
  out.geometry.reserve(order.size());
  out.primitive = order;

  std::vector<int> counts(num_tiles + 1, 0);
  for (int idx : order) {
    const auto& c = candidates[idx];
    out.splats.push_back(c.splat);
    out.geometry.push_back(c.geometry);
    for (int ty = c.y0 / kTileSize; ty <= c.y1 / kTileSize; ++ty) {
      for (int tx = c.x0 / kTileSize; tx <= c.x1 / kTileSize; ++tx) {
        ++counts[ty * out.tiles_x + tx + 1];
      }
    }
  }
  std::partial_sum(counts.begin(), counts.end(), counts.begin());
  out.tile_offsets = counts;
  out.tile_entries.resize(static_cast<std::size_t>(counts.back()));
  std::vector<int> cursor(counts.begin(), counts.end() - 1);
  for (std::size_t s = 0; s < order.size(); ++s) {
    const auto& c = candidates[order[s]];
    for (int ty = c.y0 / kTileSize; ty <= c.y1 / kTileSize; ++ty) {
      for (int tx = c.x0 / kTileSize; tx <= c.x1 / kTileSize; ++tx) {
        out.tile_entries[cursor[ty * out.tiles_x + tx]++] = static_cast<int>(s);
      }
    }
  }
  return out;
}

template <typename TileFn>
void for_each_tile(const Prepared& prep, TileFn&& fn) {
  const int num_tiles = prep.tiles_x * prep.tiles_y;
  tbb::parallel_for(tbb::blocked_range<int>(0, num_tiles, 1),
                    [&](const tbb::blocked_range<int>& r) {
                      for (int tile = r.begin(); tile != r.end(); ++tile) fn(tile);
                    });
}

// One splat's contribution at one pixel.
struct Contribution {
  int entry;      // index into tile_entries
  double alpha;
  double kernel;  // footprint weight before opacity
  double m;       // squared Mahalanobis distance
  double dx, dy;
  bool clamped;
};

}  // namespace

double splat_kernel(double m) {
  if (!(m < kFootprintCutoff)) return 0.0;
  return (std::exp(-0.5 * m) - kKernelTail * (1.0 + 0.5 * (kFootprintCutoff - m))) /
         kKernelNorm;
}

double splat_kernel_derivative(double m) {
  if (!(m < kFootprintCutoff)) return 0.0;
  return 0.5 * (kKernelTail - std::exp(-0.5 * m)) / kKernelNorm;
}

RenderOutput render(const GaussianScene& scene, const CameraView& view) {
  const Prepared prep = prepare(scene, view);
  RenderOutput out{Image(prep.width, prep.height, 3), Image(prep.width, prep.height, 1),
                   Image(prep.width, prep.height, 1)};

  for_each_tile(prep, [&](int tile) {
    const int tx = tile % prep.tiles_x;
    const int ty = tile / prep.tiles_x;
    const int begin = prep.tile_offsets[tile];
    const int end = prep.tile_offsets[tile + 1];
    const int x_end = std::min((tx + 1) * kTileSize, prep.width);
    const int y_end = std::min((ty + 1) * kTileSize, prep.height);
    for (int py = ty * kTileSize; py < y_end; ++py) {
      for (int px = tx * kTileSize; px < x_end; ++px) {
        double transmittance = 1.0;
        double r = 0.0, g = 0.0, b = 0.0, d = 0.0;
        for (int e = begin; e < end; ++e) {
          const Splat& s = prep.splats[prep.tile_entries[e]];
          const double dx = px - s.mx;
          const double dy = py - s.my;
          const double m = s.a * dx * dx + 2.0 * s.b * dx * dy + s.c * dy * dy;
          if (!(m < kFootprintCutoff)) continue;
          const double alpha = std::min(s.opacity * splat_kernel(m), kMaxSplatAlpha);
          const double w = alpha * transmittance;
          r += s.r * w;
          g += s.g * w;
          b += s.bl * w;
          d += s.depth * w;
          transmittance *= 1.0 - alpha;
        }
        const double acc = 1.0 - transmittance;
        out.rgb.at(px, py, 0) = r;
        out.rgb.at(px, py, 1) = g;
        out.rgb.at(px, py, 2) = b;
        out.alpha.at(px, py) = acc;
        out.depth.at(px, py) = d / std::max(acc, 1e-12);
      }
    }
  });
  return out;
}

RenderOutput render_reference(const GaussianScene& scene, const CameraView& view) {
  const auto& k = view.intrinsics();
  const Mat3 rot = view.rotation_matrix();
  const auto prims = scene.primitives();

  struct Entry {
    double depth;
    Vec2 mean;
    Mat2 inverse;
    double opacity;
    Vec3 color;
  };
  std::vector<Entry> entries;
  for (const auto& p : prims) {
    const Vec3 cam = view.world_to_camera(p.mean);
    if (cam.z() <= kNearPlane) continue;
    const double z = cam.z();
    const double lim_x = kJacobianGuard * 0.5 * k.width / k.fx;
    const double lim_y = kJacobianGuard * 0.5 * k.height / k.fy;
    const double jx = std::clamp(cam.x() / z, -lim_x, lim_x) * z;
    const double jy = std::clamp(cam.y() / z, -lim_y, lim_y) * z;
    Mat23 jac;
    jac << k.fx / z, 0.0, -k.fx * jx / (z * z), 0.0, k.fy / z, -k.fy * jy / (z * z);
    const Mat3 sigma = rot * covariance(p) * rot.transpose();
    Mat2 cov = jac * sigma * jac.transpose() + kScreenBlur * Mat2::Identity();
    cov = 0.5 * (cov + cov.transpose()).eval();
    entries.push_back({z,
                       {k.fx * cam.x() / z + k.cx, k.fy * cam.y() / z + k.cy},
                       cov.inverse(),
                       p.opacity(),
                       p.color});
  }
  std::stable_sort(entries.begin(), entries.end(),
                   [](const Entry& a, const Entry& b) { return a.depth < b.depth; });

  RenderOutput out{Image(k.width, k.height, 3), Image(k.width, k.height, 1),
                   Image(k.width, k.height, 1)};
  for (int py = 0; py < k.height; ++py) {
    for (int px = 0; px < k.width; ++px) {
      double transmittance = 1.0;
      Vec3 color = Vec3::Zero();
      double depth = 0.0;
      for (const auto& e : entries) {
        const Vec2 d = Vec2(px, py) - e.mean;
        const double m = d.dot(e.inverse * d);
        const double alpha = std::clamp(e.opacity * splat_kernel(m), 0.0, kMaxSplatAlpha);
        color += e.color * alpha * transmittance;
        depth += e.depth * alpha * transmittance;
        transmittance *= 1.0 - alpha;
      }
      const double acc = 1.0 - transmittance;
      for (int c = 0; c < 3; ++c) out.rgb.at(px, py, c) = color[c];
      out.alpha.at(px, py) = acc;
      out.depth.at(px, py) = depth / std::max(acc, 1e-12);
    }
  }
  return out;
}

PrimitiveGradient& PrimitiveGradient::operator+=(const PrimitiveGradient& o) {
  mean += o.mean;
  rotation += o.rotation;
  log_scale += o.log_scale;
  opacity_logit += o.opacity_logit;
  color += o.color;
  return *this;
}

bool PrimitiveGradient::all_finite() const {
  return mean.allFinite() && rotation.allFinite() && log_scale.allFinite() &&
         std::isfinite(opacity_logit) && color.allFinite();
}

namespace {

// Screen-space gradient of one splat: projected mean, conic matrix (as a
// symmetric 2x2: xx, xy, yy), colour and sigmoid opacity.
struct ScreenGradient {
  double mean_x = 0, mean_y = 0;
  double q_xx = 0, q_xy = 0, q_yy = 0;
  double r = 0, g = 0, b = 0;
  double opacity = 0;

  void add(const ScreenGradient& o) {
    mean_x += o.mean_x;
    mean_y += o.mean_y;
    q_xx += o.q_xx;
    q_xy += o.q_xy;
    q_yy += o.q_yy;
    r += o.r;
    g += o.g;
    b += o.b;
    opacity += o.opacity;
  }
};

// d R(q) / d q_k for the unit-quaternion rotation formula.
std::array<Mat3, 4> rotation_jacobian(const UnitQuaternion& q) {
  const double w = q.w(), x = q.x(), y = q.y(), z = q.z();
  std::array<Mat3, 4> d;
  d[0] << 0, -2 * z, 2 * y, 2 * z, 0, -2 * x, -2 * y, 2 * x, 0;
  d[1] << 0, 2 * y, 2 * z, 2 * y, -4 * x, -2 * w, 2 * z, 2 * w, -4 * x;
  d[2] << -4 * y, 2 * x, 2 * w, 2 * x, 0, 2 * z, -2 * w, 2 * z, -4 * y;
  d[3] << -4 * z, -2 * w, 2 * x, 2 * w, -4 * z, 2 * y, 2 * x, 2 * y, 0;
  return d;
}

PrimitiveGradient backprop_to_parameters(const GaussianPrimitive& p,
                                         const SplatGeometry& geo,
                                         const ScreenGradient& sg, const Mat3& view_rot,
                                         const Intrinsics& k) {
  PrimitiveGradient out;
  out.color = {sg.r, sg.g, sg.b};
  const double op = p.opacity();
  out.opacity_logit = sg.opacity * op * (1.0 - op);

  // Conic -> projected covariance: dL/dCov = -Q G Q.
  Mat2 g_conic;
  g_conic << sg.q_xx, sg.q_xy, sg.q_xy, sg.q_yy;
  const Mat2 g_cov = -geo.conic * g_conic * geo.conic;

  // Cov = M Sigma M^T + blur, M = J W.
  const Mat23 m = geo.jacobian * view_rot;
  const Mat3 g_sigma = m.transpose() * g_cov * m;
  const Mat23 g_m = 2.0 * g_cov * m * geo.sigma;
  const Mat23 g_j = g_m * view_rot.transpose();

  const double x = geo.cam.x(), y = geo.cam.y(), z = geo.cam.z();
  const double iz = 1.0 / z, iz2 = iz * iz, iz3 = iz2 * iz;
  // Guarded coordinates: tx = x, or tx = lim * z once clamped.
  const double dtx_dx = geo.clamp_x ? 0.0 : 1.0, dtx_dz = geo.clamp_x ? geo.tx * iz : 0.0;
  const double dty_dy = geo.clamp_y ? 0.0 : 1.0, dty_dz = geo.clamp_y ? geo.ty * iz : 0.0;
  Vec3 g_cam;
  g_cam.x() = sg.mean_x * k.fx * iz - g_j(0, 2) * k.fx * iz2 * dtx_dx;
  g_cam.y() = sg.mean_y * k.fy * iz - g_j(1, 2) * k.fy * iz2 * dty_dy;
  g_cam.z() = -sg.mean_x * k.fx * x * iz2 - sg.mean_y * k.fy * y * iz2 -
              g_j(0, 0) * k.fx * iz2 +
              g_j(0, 2) * k.fx * (2.0 * geo.tx * iz3 - dtx_dz * iz2) -
              g_j(1, 1) * k.fy * iz2 +
              g_j(1, 2) * k.fy * (2.0 * geo.ty * iz3 - dty_dz * iz2);
  out.mean = view_rot.transpose() * g_cam;

  // Sigma = (R S)(R S)^T.
  const Mat3 rot = p.rotation.to_matrix();
  const Vec3 s = p.scale();
  const Mat3 rs = rot * s.asDiagonal();
  const Mat3 g_rs = 2.0 * 0.5 * (g_sigma + g_sigma.transpose()) * rs;
  const Mat3 g_rot = g_rs * s.asDiagonal();
  for (int i = 0; i < 3; ++i) {
    out.log_scale[i] = g_rs.col(i).dot(rot.col(i)) * s[i];
  }
  const auto d_rot = rotation_jacobian(p.rotation);
  Eigen::Vector4d g_q;
  for (int i = 0; i < 4; ++i) g_q[i] = (g_rot.array() * d_rot[i].array()).sum();
  const Eigen::Vector4d q = p.rotation.coeffs();
  out.rotation = g_q - q * q.dot(g_q);
  return out;
}

}  // namespace

void render_backward(const GaussianScene& scene, const CameraView& view,
                     const Image& rgb_gradient, std::span<PrimitiveGradient> gradients) {
  if (rgb_gradient.width() != view.width() || rgb_gradient.height() != view.height() ||
      rgb_gradient.channels() != 3) {
    throw DimensionMismatch("rgb gradient does not match the view");
  }
  if (gradients.size() != scene.size()) {
    throw DimensionMismatch("gradient buffer does not match the scene size");
  }
  const Prepared prep = prepare(scene, view);
  std::vector<ScreenGradient> entry_grads(prep.tile_entries.size());

  for_each_tile(prep, [&](int tile) {
    const int tx = tile % prep.tiles_x;
    const int ty = tile / prep.tiles_x;
    const int begin = prep.tile_offsets[tile];
    const int end = prep.tile_offsets[tile + 1];
    const int x_end = std::min((tx + 1) * kTileSize, prep.width);
    const int y_end = std::min((ty + 1) * kTileSize, prep.height);
    std::vector<Contribution> hits;
    std::vector<double> trans;
    hits.reserve(static_cast<std::size_t>(end - begin));
    for (int py = ty * kTileSize; py < y_end; ++py) {
      for (int px = tx * kTileSize; px < x_end; ++px) {
        const double gr = rgb_gradient.at(px, py, 0);
        const double gg = rgb_gradient.at(px, py, 1);
        const double gb = rgb_gradient.at(px, py, 2);
        if (gr == 0.0 && gg == 0.0 && gb == 0.0) continue;
        hits.clear();
        trans.clear();
        double transmittance = 1.0;
        for (int e = begin; e < end; ++e) {
          const Splat& s = prep.splats[prep.tile_entries[e]];
          const double dx = px - s.mx;
          const double dy = py - s.my;
          const double m = s.a * dx * dx + 2.0 * s.b * dx * dy + s.c * dy * dy;
          if (!(m < kFootprintCutoff)) continue;
          const double kernel = splat_kernel(m);
          const double raw = s.opacity * kernel;
          const bool clamped = raw > kMaxSplatAlpha;
          const double alpha = clamped ? kMaxSplatAlpha : raw;
          hits.push_back({e, alpha, kernel, m, dx, dy, clamped});
          trans.push_back(transmittance);
          transmittance *= 1.0 - alpha;
        }
        // Back to front; `behind` is the colour composited behind splat i,
        // normalized by the transmittance just past it.
        double br = 0.0, bg = 0.0, bb = 0.0;
        for (std::size_t i = hits.size(); i-- > 0;) {
          const auto& h = hits[i];
          const Splat& s = prep.splats[prep.tile_entries[h.entry]];
          const double t = trans[i];
          ScreenGradient& out = entry_grads[h.entry];
          const double w = h.alpha * t;
          out.r += w * gr;
          out.g += w * gg;
          out.b += w * gb;
          const double g_alpha =
              t * ((s.r - br) * gr + (s.g - bg) * gg + (s.bl - bb) * gb);
          br = s.r * h.alpha + (1.0 - h.alpha) * br;
          bg = s.g * h.alpha + (1.0 - h.alpha) * bg;
          bb = s.bl * h.alpha + (1.0 - h.alpha) * bb;
          if (h.clamped) continue;
          out.opacity += g_alpha * h.kernel;
          const double g_m = g_alpha * s.opacity * splat_kernel_derivative(h.m);
          out.mean_x += -2.0 * g_m * (s.a * h.dx + s.b * h.dy);
          out.mean_y += -2.0 * g_m * (s.b * h.dx + s.c * h.dy);
          out.q_xx += g_m * h.dx * h.dx;
          out.q_xy += g_m * h.dx * h.dy;
          out.q_yy += g_m * h.dy * h.dy;
        }
      }
    }
  });

  // Fixed-order reduction keeps the result independent of scheduling.
  std::vector<ScreenGradient> splat_grads(prep.splats.size());
  for (std::size_t e = 0; e < prep.tile_entries.size(); ++e) {
    splat_grads[prep.tile_entries[e]].add(entry_grads[e]);
  }

  const Mat3 view_rot = view.rotation_matrix();
  const auto prims = scene.primitives();
  std::vector<PrimitiveGradient> local(prep.splats.size());
  tbb::parallel_for(tbb::blocked_range<std::size_t>(0, prep.splats.size(), 256),
                    [&](const tbb::blocked_range<std::size_t>& r) {
                      for (auto s = r.begin(); s != r.end(); ++s) {
                        local[s] = backprop_to_parameters(
                            prims[prep.primitive[s]], prep.geometry[s], splat_grads[s],
                            view_rot, view.intrinsics());
                      }
                    });
  for (std::size_t s = 0; s < local.size(); ++s) {
    gradients[prep.primitive[s]] += local[s];
  }
}

}  // namespace glados
