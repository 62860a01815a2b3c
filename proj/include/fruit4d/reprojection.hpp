#pragma once

#include <vector>

#include <Eigen/Core>

#include "fruit4d/geometry.hpp"

namespace fruit4d {

struct ReprojectionObservation {
  int pose_index = 0;      // into ReprojectionProblem::poses
  int landmark_index = 0;  // into ReprojectionProblem::initial_positions
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
};

// Box-constrained reprojection problem over fruit positions and (optionally)
// camera poses. Only visible (i, j) pairs are listed, so the a_ij indicator
// is implicit in `observations`.
struct ReprojectionProblem {
  std::vector<Pose> poses;
  std::vector<Eigen::Vector3d> initial_positions;
  std::vector<ReprojectionObservation> observations;
  Intrinsics intrinsics;
  double box_halfwidth_m = 0.15;  // |X_j - X_j0|_inf <= d
  bool optimize_poses = false;    // first pose stays gauge-fixed when enabled
  double huber_scale_px = 3.0;
};

enum class SolveStatus { kConverged, kMaxIterations, kSingular };

struct ReprojectionResult {
  std::vector<Eigen::Vector3d> positions;
  std::vector<Pose> poses;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  SolveStatus status = SolveStatus::kConverged;
};

// Stacked 2-vector residuals pixel - proj(X), one block per observation.
// Out-of-view projections contribute a constant capped block (norm equal to
// the image diagonal) instead of non-finite values.
Eigen::VectorXd ReprojectionResiduals(const ReprojectionProblem& problem,
                                      const std::vector<Eigen::Vector3d>& positions,
                                      const std::vector<Pose>& poses);

// Parameters are ordered [3 per landmark], then, when optimize_poses is set,
// [6 per pose except pose 0] as (rotation delta, translation delta).
int ParameterCount(const ReprojectionProblem& problem);

// Analytic Jacobian of ReprojectionResiduals at (positions, poses); the pose
// perturbation is a right-multiplicative so(3) delta on camera-to-world
// rotation plus an additive world-frame translation delta.
Eigen::MatrixXd ReprojectionJacobian(const ReprojectionProblem& problem,
                                     const std::vector<Eigen::Vector3d>& positions,
                                     const std::vector<Pose>& poses);

// Applies a parameter delta in the layout of ReprojectionJacobian.
void ApplyStep(const ReprojectionProblem& problem, const Eigen::VectorXd& step,
               std::vector<Eigen::Vector3d>* positions, std::vector<Pose>* poses);

// Damped Gauss-Newton with Huber weighting and projection onto the box after
// every step. Landmarks observed in fewer than two frames pass through
// unchanged. The cost never increases across accepted iterations, and the
// outputs satisfy the box exactly.
ReprojectionResult Optimize(const ReprojectionProblem& problem);

}  // namespace fruit4d
