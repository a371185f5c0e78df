#include "glados/pose_math.hpp"

#include <Eigen/Geometry>
#include <cmath>

#include "glados/error.hpp"

namespace glados {

UnitQuaternion::UnitQuaternion(double w, double x, double y, double z) {
  const double norm = std::sqrt(w * w + x * x + y * y + z * z);
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw InvalidArgument("quaternion must have finite non-zero norm");
  }
  const double sign = w < 0.0 ? -1.0 : 1.0;
  w_ = sign * w / norm;
  x_ = sign * x / norm;
  y_ = sign * y / norm;
  z_ = sign * z / norm;
}

UnitQuaternion UnitQuaternion::from_axis_angle(const Vec3& axis, double angle_rad) {
  const double n = axis.norm();
  if (!(n > 0.0)) throw InvalidArgument("rotation axis must be non-zero");
  const Vec3 u = axis / n;
  const double s = std::sin(0.5 * angle_rad);
  return {std::cos(0.5 * angle_rad), s * u.x(), s * u.y(), s * u.z()};
}

UnitQuaternion UnitQuaternion::from_matrix(const Mat3& rotation) {
  const Eigen::Quaterniond q(rotation);
  return {q.w(), q.x(), q.y(), q.z()};
}

Mat3 UnitQuaternion::to_matrix() const {
  const double w = w_, x = x_, y = y_, z = z_;
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

UnitQuaternion UnitQuaternion::operator*(const UnitQuaternion& b) const {
  const UnitQuaternion& a = *this;
  return {a.w_ * b.w_ - a.x_ * b.x_ - a.y_ * b.y_ - a.z_ * b.z_,
          a.w_ * b.x_ + a.x_ * b.w_ + a.y_ * b.z_ - a.z_ * b.y_,
          a.w_ * b.y_ - a.x_ * b.z_ + a.y_ * b.w_ + a.z_ * b.x_,
          a.w_ * b.z_ + a.x_ * b.y_ - a.y_ * b.x_ + a.z_ * b.w_};
}

double UnitQuaternion::angle() const {
  const double v = std::sqrt(x_ * x_ + y_ * y_ + z_ * z_);
  return 2.0 * std::atan2(v, std::abs(w_));
}

double rotation_angle_between(const UnitQuaternion& a, const UnitQuaternion& b) {
  return (a.conjugate() * b).angle();
}

UnitQuaternion slerp(const UnitQuaternion& q0, const UnitQuaternion& q1, double t) {
  Eigen::Vector4d a = q0.coeffs();
  Eigen::Vector4d b = q1.coeffs();
  double d = a.dot(b);
  if (d < 0.0) {
    b = -b;
    d = -d;
  }
  Eigen::Vector4d out;
  if (d > 1.0 - 1e-12) {
    out = (1.0 - t) * a + t * b;
  } else {
    // Angle from the orthogonal component keeps precision near d ~ 1.
    const Eigen::Vector4d ortho = b - d * a;
    const double theta = std::atan2(ortho.norm(), d);
    const double s = std::sin(theta);
    out = (std::sin((1.0 - t) * theta) / s) * a + (std::sin(t * theta) / s) * b;
  }
  return {out[0], out[1], out[2], out[3]};
}

Intrinsics Intrinsics::rescaled(int new_width, int new_height) const {
  const double sx = static_cast<double>(new_width) / width;
  const double sy = static_cast<double>(new_height) / height;
  return {fx * sx, fy * sy, (cx + 0.5) * sx - 0.5, (cy + 0.5) * sy - 0.5,
          new_width, new_height};
}

CameraView::CameraView(const UnitQuaternion& rotation, const Vec3& translation,
                       const Intrinsics& intrinsics)
    : rotation_(rotation), translation_(translation), intrinsics_(intrinsics) {
  const auto& k = intrinsics_;
  if (!(k.fx > 0.0) || !(k.fy > 0.0)) {
    throw InvalidArgument("camera focal lengths must be positive");
  }
  if (!(k.cx > 0.0 && k.cx < k.width) || !(k.cy > 0.0 && k.cy < k.height)) {
    throw InvalidArgument("camera principal point must lie inside the image");
  }
  if (!translation_.allFinite()) {
    throw InvalidArgument("camera translation must be finite");
  }
}

CameraView CameraView::from_camera_pose(const Mat3& camera_to_world,
                                        const Vec3& position,
                                        const Intrinsics& intrinsics) {
  const Mat3 world_to_camera = camera_to_world.transpose();
  return {UnitQuaternion::from_matrix(world_to_camera), -world_to_camera * position,
          intrinsics};
}

Vec3 CameraView::world_to_camera(const Vec3& world) const {
  return rotation_matrix() * world + translation_;
}

Vec3 CameraView::camera_to_world(const Vec3& camera) const {
  return rotation_matrix().transpose() * (camera - translation_);
}

Vec3 CameraView::center() const {
  return -(rotation_matrix().transpose() * translation_);
}

CameraView interpolate_pose(const CameraView& a, const CameraView& b, double t) {
  if (!(a.intrinsics() == b.intrinsics())) {
    throw MismatchedIntrinsics("cannot interpolate views with different intrinsics");
  }
  const Vec3 translation = (1.0 - t) * a.translation() + t * b.translation();
  return {slerp(a.rotation(), b.rotation(), t), translation, a.intrinsics()};
}

std::vector<CameraView> evaluation_trajectory(const CameraView& a,
                                              const CameraView& b, int n) {
  if (n < 1) throw InvalidArgument("trajectory length must be >= 1");
  if (!(a.intrinsics() == b.intrinsics())) {
    throw MismatchedIntrinsics("trajectory endpoints have different intrinsics");
  }
  std::vector<CameraView> views;
  views.reserve(static_cast<std::size_t>(n));
  for (int k = 1; k <= n; ++k) {
    views.push_back(interpolate_pose(a, b, static_cast<double>(k) / (n + 1)));
  }
  return views;
}

std::optional<Projection> try_project(const Vec3& world, const CameraView& view) {
  const Vec3 p = view.world_to_camera(world);
  if (p.z() <= kBehindCameraEpsilon) return std::nullopt;
  const auto& k = view.intrinsics();
  return Projection{{k.fx * p.x() / p.z() + k.cx, k.fy * p.y() / p.z() + k.cy}, p.z()};
}

Projection project(const Vec3& world, const CameraView& view) {
  auto result = try_project(world, view);
  if (!result) throw BehindCamera("point lies behind the camera");
  return *result;
}

Vec3 unproject(const Vec2& pixel, double depth, const CameraView& view) {
  const auto& k = view.intrinsics();
  const Vec3 camera{depth * (pixel.x() - k.cx) / k.fx, depth * (pixel.y() - k.cy) / k.fy,
                    depth};
  return view.camera_to_world(camera);
}

nlohmann::json to_json(const CameraView& view) {
  const auto& q = view.rotation();
  const auto& t = view.translation();
  const auto& k = view.intrinsics();
  return {{"rotation", {q.w(), q.x(), q.y(), q.z()}},
          {"translation", {t.x(), t.y(), t.z()}},
          {"intrinsics", {k.fx, k.fy, k.cx, k.cy}},
          {"size", {k.width, k.height}}};
}

CameraView camera_view_from_json(const nlohmann::json& j) {
  try {
    const auto& r = j.at("rotation");
    const auto& t = j.at("translation");
    const auto& k = j.at("intrinsics");
    const auto& s = j.at("size");
    if (r.size() != 4 || t.size() != 3 || k.size() != 4 || s.size() != 2) {
      throw MalformedFile("camera record has wrong array lengths");
    }
    Intrinsics intrinsics{k[0].get<double>(), k[1].get<double>(), k[2].get<double>(),
                          k[3].get<double>(), s[0].get<int>(),    s[1].get<int>()};
    return {UnitQuaternion(r[0].get<double>(), r[1].get<double>(), r[2].get<double>(),
                           r[3].get<double>()),
            Vec3(t[0].get<double>(), t[1].get<double>(), t[2].get<double>()),
            intrinsics};
  } catch (const nlohmann::json::exception& e) {
    throw MalformedFile(std::string("camera record: ") + e.what());
  }
}

nlohmann::json to_json(const std::vector<CameraView>& views) {
  auto out = nlohmann::json::array();
  for (const auto& v : views) out.push_back(to_json(v));
  return out;
}

std::vector<CameraView> camera_views_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw MalformedFile("trajectory must be a JSON array");
  std::vector<CameraView> views;
  for (const auto& item : j) views.push_back(camera_view_from_json(item));
  return views;
}

}  // namespace glados
