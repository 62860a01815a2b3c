#pragma once

#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "fruit4d/types.hpp"

namespace fruit4d {

// Rigid map x -> R x + t between session coordinate frames.
struct RigidTransform {
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static RigidTransform Identity() { return {}; }

  Eigen::Vector3d Apply(const Eigen::Vector3d& x) const {
    return rotation * x + translation;
  }
  RigidTransform Compose(const RigidTransform& rhs) const {
    RigidTransform out;
    out.rotation = rotation * rhs.rotation;
    out.rotation.normalize();
    out.translation = rotation * rhs.translation + translation;
    return out;
  }
  RigidTransform Inverse() const {
    RigidTransform out;
    out.rotation = rotation.conjugate();
    out.translation = -(out.rotation * translation);
    return out;
  }
  double RotationAngleDeg() const {
    const double w = std::min(1.0, std::abs(rotation.normalized().w()));
    return 2.0 * std::acos(w) * 180.0 / M_PI;
  }
};

struct IcpParams {
  double voxel_size_m = 0.05;
  double max_correspondence_m = 0.5;
  int max_iterations = 50;
  double transform_tolerance = 1e-6;  // step norm on (rotation, translation)
  double min_inlier_fraction = 0.2;
  int normal_neighbors = 10;
  int min_cloud_points = 100;
};

struct IcpResult {
  RigidTransform transform;  // maps source frame into target frame
  double rms = 0.0;          // point-to-plane RMS over inliers
  double inlier_fraction = 0.0;
  int iterations = 0;
  std::vector<double> rms_history;
};

// Point-to-plane ICP with voxel downsampling and target normals from a
// local plane fit. Throws Error(kRegistrationFailure) when fewer than
// min_inlier_fraction of the source points have a correspondence at
// convergence, and Error(kInvalidInput) for clouds below min_cloud_points.
IcpResult IcpAlign(const PointCloud& source, const PointCloud& target,
                   const RigidTransform& init, const IcpParams& params = {});

std::vector<FruitLandmark> ApplyTransform(const RigidTransform& transform,
                                          std::vector<FruitLandmark> landmarks);

}  // namespace fruit4d
