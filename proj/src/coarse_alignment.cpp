#include "glados/coarse_alignment.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>
#include <set>

#include <tbb/blocked_range.h>
#include <tbb/parallel_for.h>
#include <tbb/parallel_reduce.h>

#include "glados/error.hpp"

namespace glados {

namespace {

constexpr char kPpmpMagic[4] = {'P', 'P', 'M', 'P'};

void check_map(const Image& m, int w, int h, int c, const char* name) {
  if (m.width() != w || m.height() != h || m.channels() != c) {
    throw InvalidArgument(std::string("pair map '") + name + "' has the wrong shape");
  }
}

void check_confidence(const Image& c, const char* name) {
  for (double v : c.data()) {
    if (!std::isfinite(v) || v < 0.0) {
      throw InvalidArgument(std::string("confidence '") + name +
                            "' must be finite and non-negative");
    }
  }
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

void put_map(std::vector<std::uint8_t>& out, const Image& m) {
  for (double v : m.data()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

Image get_map(const std::uint8_t*& p, int w, int h, int c) {
  Image m(w, h, c);
  for (auto& v : m.data()) {
    v = std::bit_cast<float>(get_u32(p));
    p += 4;
  }
  return m;
}

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

Mat3 exp_so3(const Vec3& w) {
  const double angle = w.norm();
  if (angle < 1e-300) return Mat3::Identity();
  return Eigen::AngleAxisd(angle, w / angle).toRotationMatrix();
}

// Re-orthonormalizes a rotation matrix that has accumulated rounding drift.
Mat3 orthonormalize(const Mat3& r) {
  Eigen::JacobiSVD<Mat3> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 out = svd.matrixU() * svd.matrixV().transpose();
  if (out.determinant() < 0) {
    Mat3 u = svd.matrixU();
    u.col(2) *= -1;
    out = u * svd.matrixV().transpose();
  }
  return out;
}

// Camera-to-world rigid pose of a reference view.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 center = Vec3::Zero();
};

// One appearance of a view inside a pair.
struct Observation {
  std::size_t pair;
  const Image* points;
  const Image* confidence;
  const Image* colors;
};

struct Problem {
  std::span<const PairPointmap> pairs;
  std::vector<int> refs;                        // reference view of each pair
  std::map<int, std::vector<Observation>> obs;  // view -> appearances
  int width = 0;
  int height = 0;
};

struct State {
  std::map<int, Pose> poses;
  std::vector<double> log_scales;

  Vec3 world(const Problem& pb, std::size_t pair, const Vec3& x) const {
    const Pose& p = poses.at(pb.refs[pair]);
    return p.rotation * (std::exp(log_scales[pair]) * x) + p.center;
  }
};

Vec3 pixel_point(const Image& m, int x, int y) {
  return {m.at(x, y, 0), m.at(x, y, 1), m.at(x, y, 2)};
}

// Pixels are processed in fixed-size blocks and block results are combined in
// index order, so sums do not depend on scheduling.
template <typename T, typename Body>
T deterministic_sum(std::size_t n, T zero, Body body) {
  return tbb::parallel_deterministic_reduce(
      tbb::blocked_range<std::size_t>(0, n, 256), zero,
      [&](const tbb::blocked_range<std::size_t>& r, T acc) {
        for (std::size_t i = r.begin(); i != r.end(); ++i) body(i, acc);
        return acc;
      },
      [](T a, const T& b) {
        a += b;
        return a;
      });
}

struct ResidualSum {
  double weighted = 0.0;
  double weight = 0.0;
  ResidualSum& operator+=(const ResidualSum& o) {
    weighted += o.weighted;
    weight += o.weight;
    return *this;
  }
};

// Flattened (view, pixel) work items.
struct Work {
  std::vector<int> views;
  std::size_t pixels = 0;
  std::size_t size() const { return views.size() * pixels; }
};

ResidualSum residual(const Problem& pb, const State& st, const Work& work) {
  return deterministic_sum<ResidualSum>(work.size(), {}, [&](std::size_t k, ResidualSum& acc) {
    const int view = work.views[k / work.pixels];
    const int x = static_cast<int>(k % work.pixels) % pb.width;
    const int y = static_cast<int>(k % work.pixels) / pb.width;
    const auto& list = pb.obs.at(view);
    for (std::size_t a = 0; a < list.size(); ++a) {
      for (std::size_t b = a + 1; b < list.size(); ++b) {
        const double w = list[a].confidence->at(x, y) * list[b].confidence->at(x, y);
        if (w <= 0.0) continue;
        const Vec3 r = st.world(pb, list[a].pair, pixel_point(*list[a].points, x, y)) -
                       st.world(pb, list[b].pair, pixel_point(*list[b].points, x, y));
        acc.weighted += w * r.squaredNorm();
        acc.weight += w;
      }
    }
  });
}

double normalized(const ResidualSum& s) { return s.weight > 0.0 ? s.weighted / s.weight : 0.0; }

// Parameter layout: 6 per free view (rotation increment, centre), then one
// log-scale per free pair.
struct Layout {
  std::map<int, int> view_offset;
  std::vector<int> pair_offset;  // -1 when fixed
  int size = 0;
};

struct NormalEquations {
  Eigen::MatrixXd h;
  Eigen::VectorXd g;
  NormalEquations& operator+=(const NormalEquations& o) {
    h += o.h;
    g += o.g;
    return *this;
  }
};

NormalEquations normal_equations(const Problem& pb, const State& st, const Layout& layout,
                                 const Work& work) {
  NormalEquations zero{Eigen::MatrixXd::Zero(layout.size, layout.size),
                       Eigen::VectorXd::Zero(layout.size)};
  return deterministic_sum<NormalEquations>(
      work.size(), zero, [&](std::size_t k, NormalEquations& acc) {
        const int view = work.views[k / work.pixels];
        const int x = static_cast<int>(k % work.pixels) % pb.width;
        const int y = static_cast<int>(k % work.pixels) / pb.width;
        const auto& list = pb.obs.at(view);
        Eigen::MatrixXd jac(3, layout.size);
        for (std::size_t a = 0; a < list.size(); ++a) {
          for (std::size_t b = a + 1; b < list.size(); ++b) {
            const double w = list[a].confidence->at(x, y) * list[b].confidence->at(x, y);
            if (w <= 0.0) continue;
            jac.setZero();
            Vec3 r = Vec3::Zero();
            for (int side = 0; side < 2; ++side) {
              const auto& o = side == 0 ? list[a] : list[b];
              const double sign = side == 0 ? 1.0 : -1.0;
              const Pose& pose = st.poses.at(pb.refs[o.pair]);
              const Vec3 local = pose.rotation * (std::exp(st.log_scales[o.pair]) *
                                                  pixel_point(*o.points, x, y));
              r += sign * (local + pose.center);
              const auto it = layout.view_offset.find(pb.refs[o.pair]);
              if (it != layout.view_offset.end()) {
                jac.block<3, 3>(0, it->second) += -sign * skew(local);
                jac.block<3, 3>(0, it->second + 3) += sign * Mat3::Identity();
              }
              if (layout.pair_offset[o.pair] >= 0) {
                jac.col(layout.pair_offset[o.pair]) += sign * local;
              }
            }
            acc.h.noalias() += w * jac.transpose() * jac;
            acc.g.noalias() += w * jac.transpose() * r;
          }
        }
      });
}

State apply_step(const State& st, const Layout& layout, const Eigen::VectorXd& delta) {
  State out = st;
  for (const auto& [view, offset] : layout.view_offset) {
    Pose& p = out.poses.at(view);
    p.rotation = orthonormalize(exp_so3(delta.segment<3>(offset)) * p.rotation);
    p.center += delta.segment<3>(offset + 3);
  }
  for (std::size_t e = 0; e < layout.pair_offset.size(); ++e) {
    if (layout.pair_offset[e] >= 0) out.log_scales[e] += delta[layout.pair_offset[e]];
  }
  return out;
}

// Correspondences between two appearances of the same view, keeping the
// better-confidence half of the pixels with positive weight.
void shared_points(const Observation& placed, const State& st, const Problem& pb,
                   const Observation& fresh, std::vector<Vec3>& src, std::vector<Vec3>& dst,
                   std::vector<double>& weights) {
  std::vector<double> all;
  for (int y = 0; y < pb.height; ++y) {
    for (int x = 0; x < pb.width; ++x) {
      const double w = placed.confidence->at(x, y) * fresh.confidence->at(x, y);
      if (w > 0.0) all.push_back(w);
    }
  }
  if (all.empty()) return;
  std::sort(all.begin(), all.end());
  const double cut = all[all.size() / 2];
  for (int y = 0; y < pb.height; ++y) {
    for (int x = 0; x < pb.width; ++x) {
      const double w = placed.confidence->at(x, y) * fresh.confidence->at(x, y);
      if (w <= 0.0 || w < cut) continue;
      src.push_back(pixel_point(*fresh.points, x, y));
      dst.push_back(st.world(pb, placed.pair, pixel_point(*placed.points, x, y)));
      weights.push_back(w);
    }
  }
}

State initialize(const Problem& pb, int gauge_view, std::size_t fixed_pair) {
  const std::size_t n = pb.pairs.size();
  State st;
  st.log_scales.assign(n, 0.0);
  st.poses[gauge_view] = Pose{};
  std::vector<bool> placed(n, false);
  placed[fixed_pair] = true;
  std::size_t count = 1;
  while (count < n) {
    bool progress = false;
    for (std::size_t e = 0; e < n; ++e) {
      if (placed[e]) continue;
      // Lowest-index placed pair sharing a view with e.
      const Observation* anchor = nullptr;
      const Observation* fresh = nullptr;
      for (int v : {pb.pairs[e].view_i, pb.pairs[e].view_j}) {
        for (const auto& o : pb.obs.at(v)) {
          if (placed[o.pair] && (!anchor || o.pair < anchor->pair)) {
            anchor = &o;
            for (const auto& f : pb.obs.at(v)) {
              if (f.pair == e) fresh = &f;
            }
          }
        }
      }
      if (!anchor) continue;
      std::vector<Vec3> src, dst;
      std::vector<double> w;
      shared_points(*anchor, st, pb, *fresh, src, dst, w);
      const int ref = pb.refs[e];
      if (st.poses.contains(ref)) {
        // Reference pose already known: only the pair scale is free.
        const Pose& p = st.poses.at(ref);
        double num = 0.0, den = 0.0;
        for (std::size_t k = 0; k < src.size(); ++k) {
          const Vec3 rx = p.rotation * src[k];
          num += w[k] * rx.dot(dst[k] - p.center);
          den += w[k] * rx.squaredNorm();
        }
        if (!(num > 0.0 && den > 0.0)) {
          throw DegenerateConfiguration("cannot initialize scale of pair " + std::to_string(e));
        }
        st.log_scales[e] = std::log(num / den);
      } else {
        const Similarity s = umeyama(src, dst, w);
        st.poses[ref] = Pose{s.rotation, s.translation};
        st.log_scales[e] = std::log(s.scale);
      }
      placed[e] = true;
      ++count;
      progress = true;
    }
    if (!progress) throw DisconnectedGraph("pair graph is not connected");
  }
  return st;
}

}  // namespace

void PairPointmap::validate() const {
  const int w = pointmap_i.width();
  const int h = pointmap_i.height();
  if (w <= 0 || h <= 0) throw InvalidArgument("pair pointmap is empty");
  check_map(pointmap_i, w, h, 3, "pointmap_i");
  check_map(confidence_i, w, h, 1, "confidence_i");
  check_map(colors_i, w, h, 3, "colors_i");
  check_map(pointmap_j, w, h, 3, "pointmap_j");
  check_map(confidence_j, w, h, 1, "confidence_j");
  check_map(colors_j, w, h, 3, "colors_j");
  check_confidence(confidence_i, "confidence_i");
  check_confidence(confidence_j, "confidence_j");
  if (view_i < 0 || view_j < 0) throw InvalidArgument("view ids must be non-negative");
}

std::vector<std::uint8_t> encode_ppmp(const PairPointmap& pair) {
  pair.validate();
  std::vector<std::uint8_t> out(kPpmpMagic, kPpmpMagic + 4);
  put_u32(out, static_cast<std::uint32_t>(pair.pointmap_i.height()));
  put_u32(out, static_cast<std::uint32_t>(pair.pointmap_i.width()));
  put_u32(out, static_cast<std::uint32_t>(pair.view_i));
  put_u32(out, static_cast<std::uint32_t>(pair.view_j));
  for (const Image* m : {&pair.pointmap_i, &pair.confidence_i, &pair.colors_i,
                         &pair.pointmap_j, &pair.confidence_j, &pair.colors_j}) {
    put_map(out, *m);
  }
  return out;
}

PairPointmap decode_ppmp(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 20 || std::memcmp(bytes.data(), kPpmpMagic, 4) != 0) {
    throw MalformedFile("PPMP: bad magic or short header");
  }
  const std::uint32_t h = get_u32(bytes.data() + 4);
  const std::uint32_t w = get_u32(bytes.data() + 8);
  if (h == 0 || w == 0 || h > 1u << 15 || w > 1u << 15) {
    throw MalformedFile("PPMP: invalid dimensions");
  }
  const std::size_t expected = 20 + std::size_t{w} * h * 14 * 4;
  if (bytes.size() != expected) {
    throw MalformedFile("PPMP: payload size " + std::to_string(bytes.size()) + " != " +
                        std::to_string(expected));
  }
  PairPointmap pair;
  pair.view_i = static_cast<int>(get_u32(bytes.data() + 12));
  pair.view_j = static_cast<int>(get_u32(bytes.data() + 16));
  const std::uint8_t* p = bytes.data() + 20;
  const int iw = static_cast<int>(w), ih = static_cast<int>(h);
  pair.pointmap_i = get_map(p, iw, ih, 3);
  pair.confidence_i = get_map(p, iw, ih, 1);
  pair.colors_i = get_map(p, iw, ih, 3);
  pair.pointmap_j = get_map(p, iw, ih, 3);
  pair.confidence_j = get_map(p, iw, ih, 1);
  pair.colors_j = get_map(p, iw, ih, 3);
  try {
    pair.validate();
  } catch (const InvalidArgument& e) {
    throw MalformedFile(std::string("PPMP: ") + e.what());
  }
  return pair;
}

void write_ppmp(const std::filesystem::path& path, const PairPointmap& pair) {
  write_file_bytes(path, encode_ppmp(pair));
}

PairPointmap read_ppmp(const std::filesystem::path& path) {
  try {
    return decode_ppmp(read_file_bytes(path));
  } catch (const MalformedFile& e) {
    throw MalformedFile(path.string() + ": " + e.what());
  }
}

Similarity umeyama(std::span<const Vec3> src, std::span<const Vec3> dst,
                   std::span<const double> weights) {
  if (src.size() != dst.size() || src.size() != weights.size()) {
    throw InvalidArgument("umeyama: input lengths differ");
  }
  double total = 0.0;
  std::size_t positive = 0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw InvalidArgument("umeyama: bad weight");
    total += w;
    positive += w > 0.0;
  }
  if (positive < 3 || total <= 0.0) {
    throw DegenerateConfiguration("umeyama needs at least three weighted points");
  }
  Vec3 mu_s = Vec3::Zero(), mu_d = Vec3::Zero();
  for (std::size_t k = 0; k < src.size(); ++k) {
    mu_s += weights[k] * src[k];
    mu_d += weights[k] * dst[k];
  }
  mu_s /= total;
  mu_d /= total;
  Mat3 cov = Mat3::Zero();
  Mat3 src_cov = Mat3::Zero();
  double var_s = 0.0;
  for (std::size_t k = 0; k < src.size(); ++k) {
    const Vec3 a = src[k] - mu_s;
    cov += weights[k] * (dst[k] - mu_d) * a.transpose();
    src_cov += weights[k] * a * a.transpose();
    var_s += weights[k] * a.squaredNorm();
  }
  cov /= total;
  src_cov /= total;
  var_s /= total;
  const Eigen::SelfAdjointEigenSolver<Mat3> eig(src_cov);
  const double largest = eig.eigenvalues()[2];
  if (!(largest > 1e-300) || eig.eigenvalues()[1] <= 1e-12 * largest) {
    throw DegenerateConfiguration("umeyama: source points are coincident or collinear");
  }
  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 s = Mat3::Identity();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0) s(2, 2) = -1;
  Similarity out;
  out.rotation = svd.matrixU() * s * svd.matrixV().transpose();
  out.scale = (svd.singularValues().asDiagonal() * s).trace() / var_s;
  if (!(out.scale > 0.0)) {
    throw DegenerateConfiguration("umeyama: destination points are degenerate");
  }
  out.translation = mu_d - out.scale * out.rotation * mu_s;
  return out;
}

CameraView AlignmentResult::camera(int view_id, const Intrinsics& intrinsics) const {
  const auto it = poses.find(view_id);
  if (it == poses.end()) {
    throw InvalidArgument("no aligned pose for view " + std::to_string(view_id));
  }
  return {it->second.first, it->second.second, intrinsics};
}

AlignmentResult global_align(std::span<const PairPointmap> pairs, const AlignmentConfig& config) {
  if (pairs.empty()) throw DisconnectedGraph("no pairs to align");
  Problem pb;
  pb.pairs = pairs;
  pb.width = pairs[0].pointmap_i.width();
  pb.height = pairs[0].pointmap_i.height();
  std::set<int> views;
  for (std::size_t e = 0; e < pairs.size(); ++e) {
    const auto& p = pairs[e];
    p.validate();
    if (p.pointmap_i.width() != pb.width || p.pointmap_i.height() != pb.height) {
      throw InvalidArgument("all pairs must share one pointmap resolution");
    }
    pb.refs.push_back(p.view_i);
    pb.obs[p.view_i].push_back({e, &p.pointmap_i, &p.confidence_i, &p.colors_i});
    if (p.view_j != p.view_i) {
      pb.obs[p.view_j].push_back({e, &p.pointmap_j, &p.confidence_j, &p.colors_j});
    }
    views.insert(p.view_i);
    views.insert(p.view_j);
  }

  const int gauge = *views.begin();
  std::size_t fixed_pair = pairs.size();
  for (std::size_t e = 0; e < pairs.size(); ++e) {
    if (pb.refs[e] == gauge) {
      fixed_pair = e;
      break;
    }
  }
  if (fixed_pair == pairs.size()) {
    throw DisconnectedGraph("the lowest view id is not the reference of any pair");
  }

  State st = initialize(pb, gauge, fixed_pair);

  Layout layout;
  for (const auto& [view, pose] : st.poses) {
    if (view == gauge) continue;
    layout.view_offset[view] = layout.size;
    layout.size += 6;
  }
  layout.pair_offset.assign(pairs.size(), -1);
  for (std::size_t e = 0; e < pairs.size(); ++e) {
    if (e == fixed_pair) continue;
    layout.pair_offset[e] = layout.size++;
  }

  Work work;
  work.views.assign(views.begin(), views.end());
  work.pixels = static_cast<std::size_t>(pb.width) * pb.height;

  AlignmentResult result;
  double current = normalized(residual(pb, st, work));
  result.residual_history.push_back(current);
  result.converged = false;
  int it = 0;
  for (; it < config.max_iterations && layout.size > 0; ++it) {
    const NormalEquations ne = normal_equations(pb, st, layout, work);
    Eigen::MatrixXd h = ne.h;
    h.diagonal() += 1e-9 * (h.diagonal().array() + 1e-12).matrix();
    const Eigen::VectorXd direction = -h.ldlt().solve(ne.g);
    if (!direction.allFinite()) break;
    double step = config.initial_step;
    bool improved = false;
    for (int k = 0; k <= config.max_halvings; ++k, step *= 0.5) {
      State trial = apply_step(st, layout, step * direction);
      const double value = normalized(residual(pb, trial, work));
      if (value < current) {
        const double gain = current - value;
        st = std::move(trial);
        current = value;
        improved = true;
        if (gain <= 1e-12 * value) result.converged = true;
        break;
      }
    }
    if (!improved) {
      result.converged = true;
      break;
    }
    result.residual_history.push_back(current);
    if (result.converged || current == 0.0) {
      result.converged = true;
      ++it;
      break;
    }
  }
  if (layout.size == 0) result.converged = true;
  result.iterations = it;
  result.residual = current;

  for (const auto& [view, pose] : st.poses) {
    const Mat3 world_to_cam = pose.rotation.transpose();
    result.poses[view] = {UnitQuaternion::from_matrix(world_to_cam), -world_to_cam * pose.center};
  }
  for (std::size_t e = 0; e < pairs.size(); ++e) {
    result.scales[{pairs[e].view_i, pairs[e].view_j}] = std::exp(st.log_scales[e]);
  }

  // Per (view, pixel): confidence-weighted mean over the pairs that see it.
  std::vector<double> confidences;
  for (int view : work.views) {
    const auto& list = pb.obs.at(view);
    for (int y = 0; y < pb.height; ++y) {
      for (int x = 0; x < pb.width; ++x) {
        double wsum = 0.0;
        Vec3 pos = Vec3::Zero(), col = Vec3::Zero();
        for (const auto& o : list) {
          const double c = o.confidence->at(x, y);
          if (c <= 0.0) continue;
          wsum += c;
          pos += c * st.world(pb, o.pair, pixel_point(*o.points, x, y));
          col += c * pixel_point(*o.colors, x, y);
        }
        if (wsum <= 0.0) continue;
        const FusedPoint fp{pos / wsum, col / wsum, wsum / static_cast<double>(list.size())};
        if (!fp.position.allFinite()) continue;
        result.fused_points.push_back(fp);
        confidences.push_back(fp.confidence);
      }
    }
  }
  if (!confidences.empty()) {
    std::sort(confidences.begin(), confidences.end());
    const auto idx = static_cast<std::size_t>(
        std::floor(config.fused_quantile * static_cast<double>(confidences.size())));
    result.confidence_threshold = confidences[std::min(idx, confidences.size() - 1)];
  }
  return result;
}

Intrinsics estimate_intrinsics(std::span<const PairPointmap> pairs, int width, int height) {
  if (pairs.empty()) throw DegenerateConfiguration("no pointmaps to estimate intrinsics from");
  const int w = pairs[0].pointmap_i.width(), h = pairs[0].pointmap_i.height();
  const double cx = 0.5 * (w - 1), cy = 0.5 * (h - 1);
  // u - cx = f X/Z, v - cy = f Y/Z.
  double num = 0.0, den = 0.0;
  for (const auto& pair : pairs) {
    if (pair.pointmap_i.width() != w || pair.pointmap_i.height() != h) {
      throw DimensionMismatch("pointmaps differ in resolution");
    }
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double c = pair.confidence_i.at(x, y);
        const double z = pair.pointmap_i.at(x, y, 2);
        if (!(c > 0.0) || !(z > kBehindCameraEpsilon)) continue;
        const double a = pair.pointmap_i.at(x, y, 0) / z, b = pair.pointmap_i.at(x, y, 1) / z;
        if (!std::isfinite(a) || !std::isfinite(b)) continue;
        num += c * ((x - cx) * a + (y - cy) * b);
        den += c * (a * a + b * b);
      }
    }
  }
  const double f = num / den;
  if (!(den > 0.0) || !(f > 0.0) || !std::isfinite(f)) {
    throw DegenerateConfiguration("pointmaps do not constrain the focal length");
  }
  return Intrinsics{f, f, cx, cy, w, h}.rescaled(width, height);
}

std::vector<double> knn_mean_distance(std::span<const Vec3> points, int k) {
  const std::size_t n = points.size();
  std::vector<double> out(n, 0.0);
  if (n < 2 || k < 1) return out;
  // Sweep along x: candidates further than the current k-th best in x alone
  // cannot improve the result.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return points[a].x() < points[b].x(); });
  std::vector<std::size_t> rank(n);
  for (std::size_t r = 0; r < n; ++r) rank[order[r]] = r;
  const std::size_t kk = std::min<std::size_t>(k, n - 1);
  tbb::parallel_for(tbb::blocked_range<std::size_t>(0, n), [&](const auto& range) {
    std::vector<double> best;
    for (std::size_t i = range.begin(); i != range.end(); ++i) {
      best.assign(kk, std::numeric_limits<double>::infinity());
      auto consider = [&](std::size_t j) {
        const double d = (points[j] - points[i]).squaredNorm();
        if (d < best.back()) {
          best.back() = d;
          std::sort(best.begin(), best.end());
        }
      };
      const std::size_t r = rank[i];
      for (std::size_t s = r + 1; s < n; ++s) {
        const double dx = points[order[s]].x() - points[i].x();
        if (dx * dx > best.back()) break;
        consider(order[s]);
      }
      for (std::size_t s = r; s-- > 0;) {
        const double dx = points[i].x() - points[order[s]].x();
        if (dx * dx > best.back()) break;
        consider(order[s]);
      }
      double sum = 0.0;
      for (double d : best) sum += std::sqrt(d);
      out[i] = sum / static_cast<double>(kk);
    }
  });
  return out;
}

GaussianScene scaffold_from_alignment(const AlignmentResult& result) {
  std::vector<Vec3> positions;
  std::vector<const FusedPoint*> kept;
  for (const auto& fp : result.fused_points) {
    if (fp.confidence > 0.0 && fp.confidence >= result.confidence_threshold) {
      kept.push_back(&fp);
      positions.push_back(fp.position);
    }
  }
  if (kept.empty()) throw EmptyAlignment("no fused point passes the confidence threshold");

  Vec3 lo = positions[0], hi = positions[0];
  for (const auto& p : positions) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  double scene_scale = (hi - lo).norm();
  if (!(scene_scale > 0.0)) scene_scale = 1.0;
  const auto dist = knn_mean_distance(positions, kScaffoldNeighbors);

  GaussianScene scene;
  for (std::size_t i = 0; i < kept.size(); ++i) {
    const double d = kept.size() > 1 ? dist[i] : 0.1 * scene_scale;
    const double sigma = std::clamp(d, 1e-4 * scene_scale, 0.1 * scene_scale);
    GaussianPrimitive p;
    p.mean = kept[i]->position;
    p.log_scale = Vec3::Constant(std::log(sigma));
    p.opacity_logit = logit(kScaffoldOpacity);
    p.color = kept[i]->color.cwiseMax(0.0).cwiseMin(1.0);
    scene.add(p, Provenance::kCoarse);
  }
  return scene;
}

}  // namespace glados
