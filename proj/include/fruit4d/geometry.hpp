#pragma once

#include <optional>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace fruit4d {

struct Intrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  double ImageDiagonal() const;
  void Validate() const;  // throws Error(kInvalidInput)
};

// Camera pose as camera-to-world; `rotation` columns are the camera axes
// expressed in the world frame. Quaternion is stored w-first.
struct Pose {
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  int frame_id = 0;
  double timestamp = 0.0;

  Eigen::Vector3d ToCamera(const Eigen::Vector3d& world) const {
    return rotation.conjugate() * (world - translation);
  }
  Eigen::Vector3d ToWorld(const Eigen::Vector3d& camera) const {
    return rotation * camera + translation;
  }

  void Validate() const;  // quaternion norm within 1e-9 of 1
};

// Pinhole projection of a world point into the image. Returns (u, v) in
// pixels, or nullopt when the camera-frame depth is <= 0 or the rounded
// pixel falls outside [0, width) x [0, height). Throws on non-finite input.
std::optional<Eigen::Vector2d> Project(const Eigen::Vector3d& world,
                                       const Pose& pose, const Intrinsics& k);

inline Eigen::Matrix3d Skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

// Rodrigues exponential, safe near zero.
Eigen::Matrix3d ExpSo3(const Eigen::Vector3d& w);

}  // namespace fruit4d
