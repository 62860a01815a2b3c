#include "fruit4d/registration.hpp"

#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "fruit4d/error.hpp"
#include "fruit4d/fusion.hpp"
#include "fruit4d/geometry.hpp"
#include "fruit4d/kdtree.hpp"

namespace fruit4d {
namespace {

std::vector<Eigen::Vector3d> EstimateNormals(const KdTree3& tree, int k) {
  const auto& pts = tree.points();
  std::vector<Eigen::Vector3d> normals(pts.size(), Eigen::Vector3d::Zero());
  for (size_t i = 0; i < pts.size(); ++i) {
    const std::vector<int> nn = tree.Knn(pts[i], k);
    if (nn.size() < 3) continue;
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (int idx : nn) mean += pts[idx];
    mean /= static_cast<double>(nn.size());
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (int idx : nn) {
      const Eigen::Vector3d d = pts[idx] - mean;
      cov += d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
    normals[i] = eig.eigenvectors().col(0);  // smallest eigenvalue
  }
  return normals;
}

struct CorrespondenceStats {
  double rms = 0.0;
  double inlier_fraction = 0.0;
  int count = 0;
};

CorrespondenceStats EvaluateCorrespondences(
    const std::vector<Eigen::Vector3d>& source, const KdTree3& target_tree,
    const std::vector<Eigen::Vector3d>& normals, const RigidTransform& t,
    double max_dist) {
  CorrespondenceStats stats;
  double sum_sq = 0.0;
  for (const Eigen::Vector3d& p : source) {
    const Eigen::Vector3d moved = t.Apply(p);
    const auto hit = target_tree.Nearest(moved, max_dist);
    if (!hit) continue;
    const Eigen::Vector3d& n = normals[hit->index];
    if (n.squaredNorm() < 0.5) continue;  // no valid normal
    const double e = n.dot(moved - target_tree.points()[hit->index]);
    sum_sq += e * e;
    stats.count += 1;
  }
  if (stats.count > 0) stats.rms = std::sqrt(sum_sq / stats.count);
  stats.inlier_fraction =
      source.empty() ? 0.0 : static_cast<double>(stats.count) / source.size();
  return stats;
}

}  // namespace

IcpResult IcpAlign(const PointCloud& source, const PointCloud& target,
                   const RigidTransform& init, const IcpParams& params) {
  if (static_cast<int>(source.Size()) < params.min_cloud_points ||
      static_cast<int>(target.Size()) < params.min_cloud_points) {
    ThrowInvalidInput("icp: clouds below min_cloud_points");
  }

  const PointCloud src_ds = VoxelDownsample(source, params.voxel_size_m);
  const PointCloud tgt_ds = VoxelDownsample(target, params.voxel_size_m);
  const KdTree3 tree(tgt_ds.points);
  const std::vector<Eigen::Vector3d> normals =
      EstimateNormals(tree, params.normal_neighbors);

  RigidTransform t = init;
  CorrespondenceStats stats = EvaluateCorrespondences(
      src_ds.points, tree, normals, t, params.max_correspondence_m);

  IcpResult result;
  result.rms_history.push_back(stats.rms);

  for (int iter = 0; iter < params.max_iterations; ++iter) {
    // Assemble the linearized point-to-plane normal equations at t.
    Eigen::Matrix<double, 6, 6> a = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> b = Eigen::Matrix<double, 6, 1>::Zero();
    int used = 0;
    for (const Eigen::Vector3d& p : src_ds.points) {
      const Eigen::Vector3d moved = t.Apply(p);
      const auto hit = tree.Nearest(moved, params.max_correspondence_m);
      if (!hit) continue;
      const Eigen::Vector3d& n = normals[hit->index];
      if (n.squaredNorm() < 0.5) continue;
      const double e = n.dot(moved - tree.points()[hit->index]);
      Eigen::Matrix<double, 6, 1> j;
      j.head<3>() = moved.cross(n);
      j.tail<3>() = n;
      a += j * j.transpose();
      b += j * e;
      ++used;
    }
    if (used < 6) break;
    a.diagonal().array() += 1e-12;
    Eigen::Matrix<double, 6, 1> x = a.ldlt().solve(-b);
    if (!x.allFinite()) break;

    // Backtrack if a full step would raise the RMS; keeps the reported
    // series non-increasing even when correspondences reshuffle.
    bool accepted = false;
    for (int halving = 0; halving < 6; ++halving) {
      const Eigen::Vector3d omega = x.head<3>();
      const Eigen::Vector3d dt = x.tail<3>();
      RigidTransform cand;
      const Eigen::Matrix3d r = ExpSo3(omega);
      cand.rotation = Eigen::Quaterniond(r * t.rotation.toRotationMatrix());
      cand.rotation.normalize();
      cand.translation = r * t.translation + dt;
      const CorrespondenceStats cand_stats = EvaluateCorrespondences(
          src_ds.points, tree, normals, cand, params.max_correspondence_m);
      if (cand_stats.count > 0 && cand_stats.rms <= stats.rms + 1e-12) {
        t = cand;
        stats = cand_stats;
        accepted = true;
        break;
      }
      x *= 0.5;
    }
    if (!accepted) break;

    result.rms_history.push_back(stats.rms);
    result.iterations = iter + 1;
    if (x.norm() < params.transform_tolerance) break;
  }

  result.transform = t;
  result.rms = stats.rms;
  result.inlier_fraction = stats.inlier_fraction;
  if (stats.inlier_fraction < params.min_inlier_fraction) {
    throw Error(ErrorCode::kRegistrationFailure,
                "icp: inlier fraction " + std::to_string(stats.inlier_fraction) +
                    " below " + std::to_string(params.min_inlier_fraction));
  }
  return result;
}

std::vector<FruitLandmark> ApplyTransform(const RigidTransform& transform,
                                          std::vector<FruitLandmark> landmarks) {
  for (FruitLandmark& lm : landmarks) {
    lm.position = transform.Apply(lm.position);
  }
  return landmarks;
}

}  // namespace fruit4d
