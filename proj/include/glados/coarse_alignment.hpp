#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "glados/gaussian_scene.hpp"
#include "glados/image.hpp"
#include "glados/pose_math.hpp"

namespace glados {

// Dense pointmaps for an ordered view pair, both expressed in the pair-local
// frame, which is the camera frame of view_i.
struct PairPointmap {
  int view_i = 0;
  int view_j = 0;
  Image pointmap_i;    // H x W x 3
  Image confidence_i;  // H x W
  Image colors_i;      // H x W x 3
  Image pointmap_j;
  Image confidence_j;
  Image colors_j;

  // Throws InvalidArgument on shape mismatch or negative/non-finite confidence.
  void validate() const;
};

// PPMP: "PPMP", u32 H, u32 W, u32 id_i, u32 id_j, then float32 little-endian
// maps in the order pointmap_i, conf_i, colors_i, pointmap_j, conf_j,
// colors_j, each row-major with interleaved channels.
std::vector<std::uint8_t> encode_ppmp(const PairPointmap& pair);
PairPointmap decode_ppmp(std::span<const std::uint8_t> bytes);
void write_ppmp(const std::filesystem::path& path, const PairPointmap& pair);
PairPointmap read_ppmp(const std::filesystem::path& path);

struct Similarity {
  double scale = 1.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& x) const { return scale * (rotation * x) + translation; }
};

// Weighted least-squares similarity mapping src onto dst.
// Throws DegenerateConfiguration for fewer than three points, zero total
// weight, or coincident/collinear source points.
Similarity umeyama(std::span<const Vec3> src, std::span<const Vec3> dst,
                   std::span<const double> weights);

struct FusedPoint {
  Vec3 position;
  Vec3 color;
  double confidence = 0.0;
};

struct AlignmentResult {
  // World-to-camera poses (CameraView convention) of every view that is the
  // reference of at least one pair.
  std::map<int, std::pair<UnitQuaternion, Vec3>> poses;
  std::map<std::pair<int, int>, double> scales;
  std::vector<FusedPoint> fused_points;
  // Fused points below this confidence are dropped by the scaffold.
  double confidence_threshold = 0.0;
  double residual = 0.0;
  std::vector<double> residual_history;  // initial value, then one per iteration
  int iterations = 0;
  bool converged = true;  // false: iteration cap reached, best iterate returned

  CameraView camera(int view_id, const Intrinsics& intrinsics) const;
};

struct AlignmentConfig {
  int max_iterations = 300;
  double initial_step = 1.0;
  int max_halvings = 30;
  double fused_quantile = 0.2;
};

AlignmentResult global_align(std::span<const PairPointmap> pairs,
                             const AlignmentConfig& config = {});

inline constexpr int kScaffoldNeighbors = 3;
inline constexpr double kScaffoldOpacity = 0.9;

// One coarse primitive per fused point at or above the confidence threshold,
// isotropic scale from the mean distance to the 3 nearest neighbours.
GaussianScene scaffold_from_alignment(const AlignmentResult& result);

// Shared pinhole intrinsics at width x height: principal point at the image
// centre, focal length fitted by confidence-weighted least squares to every
// pair's pointmap_i (which lives in the camera frame of view_i).
// Throws DegenerateConfiguration when no point constrains the focal length.
Intrinsics estimate_intrinsics(std::span<const PairPointmap> pairs, int width, int height);

// Mean distance to the k nearest other points, per point (exact search).
std::vector<double> knn_mean_distance(std::span<const Vec3> points, int k);

}  // namespace glados
