#pragma once

#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "glados/pose_math.hpp"

namespace glados {

enum class Provenance { kCoarse, kExpansion, kRefinement };

std::string_view to_string(Provenance p);
Provenance provenance_from_string(std::string_view name);

inline constexpr double kMinScale = 1e-7;
inline constexpr double kMaxScale = 1e3;

// One anisotropic Gaussian. Scale is stored as log std-dev, opacity as a
// logit, colour as the degree-0 RGB coefficient in [0,1].
struct GaussianPrimitive {
  Vec3 mean = Vec3::Zero();
  UnitQuaternion rotation;
  Vec3 log_scale = Vec3::Zero();
  double opacity_logit = 0.0;
  Vec3 color = Vec3::Zero();

  double opacity() const;
  Vec3 scale() const { return log_scale.array().exp(); }

  friend bool operator==(const GaussianPrimitive&, const GaussianPrimitive&) = default;
};

// Sigma = R diag(s^2) R^T.
Mat3 covariance(const GaussianPrimitive& p);

double sigmoid(double x);
double logit(double p);

class GaussianScene {
 public:
  GaussianScene() = default;

  std::size_t size() const noexcept { return primitives_.size(); }
  bool empty() const noexcept { return primitives_.empty(); }

  std::span<const GaussianPrimitive> primitives() const noexcept { return primitives_; }
  std::span<GaussianPrimitive> mutable_primitives() noexcept { return primitives_; }
  std::span<const Provenance> provenance() const noexcept { return provenance_; }

  const GaussianPrimitive& operator[](std::size_t i) const { return primitives_[i]; }
  GaussianPrimitive& operator[](std::size_t i) { return primitives_[i]; }

  void add(const GaussianPrimitive& p, Provenance tag);

  friend bool operator==(const GaussianScene&, const GaussianScene&) = default;

 private:
  std::vector<GaussianPrimitive> primitives_;
  std::vector<Provenance> provenance_;
};

// Appends `added` after the base primitives, all tagged `tag`.
GaussianScene merge(const GaussianScene& base, std::span<const GaussianPrimitive> added,
                    Provenance tag);

// Binary little-endian splat PLY (float32 x,y,z,f_dc_0..2,opacity,
// scale_0..2,rot_0..3) plus a "<stem>.meta.json" provenance sidecar.
void save_scene(const GaussianScene& scene, const std::filesystem::path& path);
GaussianScene load_scene(const std::filesystem::path& path);

std::filesystem::path sidecar_path(const std::filesystem::path& ply_path);

}  // namespace glados
