#pragma once

#include <Eigen/Core>
#include <optional>
#include <vector>

#include <json.hpp>

namespace glados {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Unit quaternion (w, x, y, z). Construction normalizes and canonicalizes the
// sign so that w >= 0; q and -q denote the same rotation.
class UnitQuaternion {
 public:
  UnitQuaternion() = default;
  UnitQuaternion(double w, double x, double y, double z);

  static UnitQuaternion identity() { return {}; }
  static UnitQuaternion from_axis_angle(const Vec3& axis, double angle_rad);
  static UnitQuaternion from_matrix(const Mat3& rotation);

  double w() const noexcept { return w_; }
  double x() const noexcept { return x_; }
  double y() const noexcept { return y_; }
  double z() const noexcept { return z_; }
  Eigen::Vector4d coeffs() const { return {w_, x_, y_, z_}; }

  Mat3 to_matrix() const;
  UnitQuaternion conjugate() const { return {w_, -x_, -y_, -z_}; }
  UnitQuaternion operator*(const UnitQuaternion& rhs) const;
  Vec3 rotate(const Vec3& v) const { return to_matrix() * v; }

  // Rotation angle in [0, pi] of this rotation.
  double angle() const;

  friend bool operator==(const UnitQuaternion&, const UnitQuaternion&) = default;

 private:
  double w_ = 1.0;
  double x_ = 0.0;
  double y_ = 0.0;
  double z_ = 0.0;
};

// Angle in [0, pi] of the relative rotation a^-1 * b.
double rotation_angle_between(const UnitQuaternion& a, const UnitQuaternion& b);

// Spherical linear interpolation along the shorter arc.
UnitQuaternion slerp(const UnitQuaternion& q0, const UnitQuaternion& q1, double t);

struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.5;
  double cy = 0.5;
  int width = 1;
  int height = 1;

  // Intrinsics for the same field of view rendered at another resolution.
  Intrinsics rescaled(int new_width, int new_height) const;

  friend bool operator==(const Intrinsics&, const Intrinsics&) = default;
};

// Pinhole camera. The pose maps world to camera: x_cam = R * x_world + t,
// with +z forward, +x right and +y down. Pixel centres sit on integer
// coordinates.
class CameraView {
 public:
  CameraView() = default;
  CameraView(const UnitQuaternion& rotation, const Vec3& translation,
             const Intrinsics& intrinsics);

  // Builds a view from a camera position and the camera-to-world rotation.
  static CameraView from_camera_pose(const Mat3& camera_to_world,
                                     const Vec3& position,
                                     const Intrinsics& intrinsics);

  const UnitQuaternion& rotation() const noexcept { return rotation_; }
  const Vec3& translation() const noexcept { return translation_; }
  const Intrinsics& intrinsics() const noexcept { return intrinsics_; }
  int width() const noexcept { return intrinsics_.width; }
  int height() const noexcept { return intrinsics_.height; }

  Mat3 rotation_matrix() const { return rotation_.to_matrix(); }
  Vec3 world_to_camera(const Vec3& world) const;
  Vec3 camera_to_world(const Vec3& camera) const;
  Vec3 center() const;

  CameraView with_intrinsics(const Intrinsics& intrinsics) const {
    return {rotation_, translation_, intrinsics};
  }

  friend bool operator==(const CameraView&, const CameraView&) = default;

 private:
  UnitQuaternion rotation_;
  Vec3 translation_ = Vec3::Zero();
  Intrinsics intrinsics_;
};

// Linear interpolation of translation and slerp of rotation. Throws
// MismatchedIntrinsics when the two views' intrinsics differ.
CameraView interpolate_pose(const CameraView& a, const CameraView& b, double t);

// n views strictly between a and b at t_k = k / (n + 1), k = 1..n.
std::vector<CameraView> evaluation_trajectory(const CameraView& a,
                                              const CameraView& b, int n = 200);

struct Projection {
  Vec2 pixel;
  double depth = 0.0;
};

inline constexpr double kBehindCameraEpsilon = 1e-6;

// Throws BehindCamera when the camera-space depth is <= 1e-6.
Projection project(const Vec3& world, const CameraView& view);
std::optional<Projection> try_project(const Vec3& world, const CameraView& view);
Vec3 unproject(const Vec2& pixel, double depth, const CameraView& view);

nlohmann::json to_json(const CameraView& view);
CameraView camera_view_from_json(const nlohmann::json& j);
nlohmann::json to_json(const std::vector<CameraView>& views);
std::vector<CameraView> camera_views_from_json(const nlohmann::json& j);

}  // namespace glados
