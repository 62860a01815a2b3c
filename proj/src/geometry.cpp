#include "fruit4d/geometry.hpp"

#include <cmath>

#include "fruit4d/error.hpp"

namespace fruit4d {

double Intrinsics::ImageDiagonal() const {
  return std::hypot(static_cast<double>(width), static_cast<double>(height));
}

void Intrinsics::Validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) ThrowInvalidInput("intrinsics: fx, fy must be > 0");
  if (!(cx > 0.0 && cx < width) || !(cy > 0.0 && cy < height)) {
    ThrowInvalidInput("intrinsics: principal point outside image");
  }
}

void Pose::Validate() const {
  if (std::abs(rotation.norm() - 1.0) > 1e-9) {
    ThrowInvalidInput("pose: quaternion not normalized");
  }
  if (!translation.allFinite()) ThrowInvalidInput("pose: non-finite translation");
}

std::optional<Eigen::Vector2d> Project(const Eigen::Vector3d& world,
                                       const Pose& pose, const Intrinsics& k) {
  if (!world.allFinite()) ThrowInvalidInput("project: non-finite point");
  const Eigen::Vector3d cam = pose.ToCamera(world);
  if (cam.z() <= 0.0) return std::nullopt;
  const double u = k.fx * cam.x() / cam.z() + k.cx;
  const double v = k.fy * cam.y() / cam.z() + k.cy;
  const long ui = std::lround(u);
  const long vi = std::lround(v);
  if (ui < 0 || ui >= k.width || vi < 0 || vi >= k.height) return std::nullopt;
  return Eigen::Vector2d(u, v);
}

Eigen::Matrix3d ExpSo3(const Eigen::Vector3d& w) {
  const double theta = w.norm();
  if (theta < 1e-12) {
    return Eigen::Matrix3d::Identity() + Skew(w);
  }
  const Eigen::Vector3d axis = w / theta;
  return Eigen::AngleAxisd(theta, axis).toRotationMatrix();
}

}  // namespace fruit4d
