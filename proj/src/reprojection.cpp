#include "fruit4d/reprojection.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <Eigen/Cholesky>
#include <Eigen/Geometry>

#include "fruit4d/error.hpp"

namespace fruit4d {
namespace {

constexpr double kMinDepth = 1e-9;
constexpr double kRelCostTol = 1e-8;
constexpr double kStepTol = 1e-10;
constexpr int kMaxIterations = 100;
constexpr double kLambdaInit = 1e-4;
constexpr double kLambdaMax = 1e12;

struct ResidualBlock {
  Eigen::Vector2d r;
  Eigen::Matrix<double, 2, 3> d_position;  // d r / d X
  Eigen::Matrix<double, 2, 3> d_rotation;  // d r / d theta (right delta)
  Eigen::Matrix<double, 2, 3> d_translation;
  bool capped = false;
};

ResidualBlock EvaluateObservation(const ReprojectionObservation& obs,
                                  const Eigen::Vector3d& position,
                                  const Pose& pose, const Intrinsics& k) {
  ResidualBlock block;
  block.d_position.setZero();
  block.d_rotation.setZero();
  block.d_translation.setZero();

  const Eigen::Matrix3d r_wc = pose.rotation.toRotationMatrix();
  const Eigen::Vector3d cam = r_wc.transpose() * (position - pose.translation);
  const double cap = k.ImageDiagonal();

  if (cam.z() <= kMinDepth) {
    // Behind (or at) the camera plane: constant capped block, zero gradient.
    block.r = Eigen::Vector2d::Constant(cap / std::sqrt(2.0));
    block.capped = true;
    return block;
  }

  const double inv_z = 1.0 / cam.z();
  const Eigen::Vector2d projected(k.fx * cam.x() * inv_z + k.cx,
                                  k.fy * cam.y() * inv_z + k.cy);
  block.r = obs.pixel - projected;
  if (block.r.norm() > cap) {
    // Cap wildly out-of-view residuals at the image diagonal.
    block.r *= cap / block.r.norm();
    block.capped = true;
    return block;
  }

  Eigen::Matrix<double, 2, 3> d_proj_d_cam;
  d_proj_d_cam << k.fx * inv_z, 0.0, -k.fx * cam.x() * inv_z * inv_z,
      0.0, k.fy * inv_z, -k.fy * cam.y() * inv_z * inv_z;

  block.d_position = -d_proj_d_cam * r_wc.transpose();
  block.d_rotation = -d_proj_d_cam * Skew(cam);
  block.d_translation = d_proj_d_cam * r_wc.transpose();
  return block;
}

double HuberCost(const Eigen::Vector2d& r, double delta) {
  const double s = r.norm();
  if (s <= delta) return 0.5 * s * s;
  return delta * (s - 0.5 * delta);
}

double HuberWeight(const Eigen::Vector2d& r, double delta) {
  const double s = r.norm();
  if (s <= delta) return 1.0;
  return delta / s;
}

Eigen::Vector3d ClampToBox(const Eigen::Vector3d& x, const Eigen::Vector3d& x0,
                           double d) {
  return x.cwiseMax(x0 - Eigen::Vector3d::Constant(d))
      .cwiseMin(x0 + Eigen::Vector3d::Constant(d));
}

double TotalCost(const ReprojectionProblem& problem,
                 const std::vector<Eigen::Vector3d>& positions,
                 const std::vector<Pose>& poses) {
  double cost = 0.0;
  for (const auto& obs : problem.observations) {
    const ResidualBlock block = EvaluateObservation(
        obs, positions[obs.landmark_index], poses[obs.pose_index],
        problem.intrinsics);
    cost += HuberCost(block.r, problem.huber_scale_px);
  }
  return cost;
}

}  // namespace

Eigen::VectorXd ReprojectionResiduals(const ReprojectionProblem& problem,
                                      const std::vector<Eigen::Vector3d>& positions,
                                      const std::vector<Pose>& poses) {
  Eigen::VectorXd r(2 * problem.observations.size());
  for (size_t i = 0; i < problem.observations.size(); ++i) {
    const auto& obs = problem.observations[i];
    const ResidualBlock block = EvaluateObservation(
        obs, positions[obs.landmark_index], poses[obs.pose_index],
        problem.intrinsics);
    r.segment<2>(2 * i) = block.r;
  }
  return r;
}

int ParameterCount(const ReprojectionProblem& problem) {
  int n = 3 * static_cast<int>(problem.initial_positions.size());
  if (problem.optimize_poses && problem.poses.size() > 1) {
    n += 6 * (static_cast<int>(problem.poses.size()) - 1);
  }
  return n;
}

Eigen::MatrixXd ReprojectionJacobian(const ReprojectionProblem& problem,
                                     const std::vector<Eigen::Vector3d>& positions,
                                     const std::vector<Pose>& poses) {
  const int cols = ParameterCount(problem);
  const int landmark_params = 3 * static_cast<int>(positions.size());
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(
      2 * static_cast<Eigen::Index>(problem.observations.size()), cols);
  for (size_t i = 0; i < problem.observations.size(); ++i) {
    const auto& obs = problem.observations[i];
    const ResidualBlock block = EvaluateObservation(
        obs, positions[obs.landmark_index], poses[obs.pose_index],
        problem.intrinsics);
    j.block<2, 3>(2 * i, 3 * obs.landmark_index) = block.d_position;
    if (problem.optimize_poses && obs.pose_index > 0) {
      const int col = landmark_params + 6 * (obs.pose_index - 1);
      j.block<2, 3>(2 * i, col) = block.d_rotation;
      j.block<2, 3>(2 * i, col + 3) = block.d_translation;
    }
  }
  return j;
}

void ApplyStep(const ReprojectionProblem& problem, const Eigen::VectorXd& step,
               std::vector<Eigen::Vector3d>* positions,
               std::vector<Pose>* poses) {
  for (size_t j = 0; j < positions->size(); ++j) {
    (*positions)[j] += step.segment<3>(3 * j);
  }
  if (!problem.optimize_poses) return;
  const int landmark_params = 3 * static_cast<int>(positions->size());
  for (size_t i = 1; i < poses->size(); ++i) {
    const int col = landmark_params + 6 * (static_cast<int>(i) - 1);
    const Eigen::Vector3d theta = step.segment<3>(col);
    const Eigen::Vector3d dt = step.segment<3>(col + 3);
    Pose& pose = (*poses)[i];
    pose.rotation = pose.rotation * Eigen::Quaterniond(ExpSo3(theta));
    pose.rotation.normalize();
    pose.translation += dt;
  }
}

ReprojectionResult Optimize(const ReprojectionProblem& problem) {
  ReprojectionResult result;
  result.positions = problem.initial_positions;
  result.poses = problem.poses;
  result.initial_cost = TotalCost(problem, result.positions, result.poses);
  result.final_cost = result.initial_cost;
  result.status = SolveStatus::kConverged;

  std::vector<int> obs_per_landmark(problem.initial_positions.size(), 0);
  for (const auto& obs : problem.observations) {
    obs_per_landmark[obs.landmark_index] += 1;
  }

  const double d = problem.box_halfwidth_m;

  if (!problem.optimize_poses) {
    // Poses fixed: the normal equations are block-diagonal per landmark, so
    // each landmark solves its own damped 3x3 system.
    std::map<int, std::vector<const ReprojectionObservation*>> by_landmark;
    for (const auto& obs : problem.observations) {
      by_landmark[obs.landmark_index].push_back(&obs);
    }
    int total_accepted = 0;
    bool any_singular = false;
    for (auto& [lm, obs_list] : by_landmark) {
      if (obs_per_landmark[lm] < 2) continue;
      const Eigen::Vector3d x0 = problem.initial_positions[lm];
      Eigen::Vector3d x = x0;

      auto cost_at = [&](const Eigen::Vector3d& candidate) {
        double c = 0.0;
        for (const auto* obs : obs_list) {
          const ResidualBlock b = EvaluateObservation(
              *obs, candidate, problem.poses[obs->pose_index],
              problem.intrinsics);
          c += HuberCost(b.r, problem.huber_scale_px);
        }
        return c;
      };

      double cost = cost_at(x);
      double lambda = kLambdaInit;
      bool accepted_any = false;
      for (int iter = 0; iter < kMaxIterations && cost > 1e-24;) {
        Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
        Eigen::Vector3d g = Eigen::Vector3d::Zero();
        for (const auto* obs : obs_list) {
          const ResidualBlock b = EvaluateObservation(
              *obs, x, problem.poses[obs->pose_index], problem.intrinsics);
          const double w = HuberWeight(b.r, problem.huber_scale_px);
          h += w * b.d_position.transpose() * b.d_position;
          g += w * b.d_position.transpose() * b.r;
        }
        bool improved = false;
        while (lambda <= kLambdaMax) {
          const Eigen::Matrix3d damped =
              h + lambda * Eigen::Matrix3d::Identity();
          const Eigen::Vector3d step = damped.ldlt().solve(-g);
          if (!step.allFinite()) {
            lambda *= 10.0;
            continue;
          }
          const Eigen::Vector3d candidate = ClampToBox(x + step, x0, d);
          const double candidate_cost = cost_at(candidate);
          if (candidate_cost < cost) {
            const double rel_decrease =
                (cost - candidate_cost) / std::max(cost, 1e-300);
            const double applied_step = (candidate - x).norm();
            x = candidate;
            cost = candidate_cost;
            lambda = std::max(lambda / 3.0, 1e-12);
            ++iter;
            ++total_accepted;
            accepted_any = true;
            improved = true;
            if (rel_decrease < kRelCostTol || applied_step < kStepTol) {
              iter = kMaxIterations;  // converged for this landmark
            }
            break;
          }
          lambda *= 10.0;
        }
        if (!improved) {
          // Stalled. A small gradient with a usable Hessian is an ordinary
          // local minimum; anything else means the damped system could not
          // make progress.
          if (!accepted_any && cost > 1e-18 &&
              (g.norm() >= 1e-8 || h.norm() < 1e-12)) {
            any_singular = true;
          }
          break;
        }
      }
      result.positions[lm] = x;
    }
    result.iterations = total_accepted;
    result.final_cost = TotalCost(problem, result.positions, result.poses);
    if (any_singular && total_accepted == 0) {
      // Persistent singularity: hand back the initial values.
      result.status = SolveStatus::kSingular;
      result.positions = problem.initial_positions;
      result.final_cost = result.initial_cost;
    }
    return result;
  }

  // Joint mode: dense damped Gauss-Newton over landmarks and poses (pose 0
  // gauge-fixed). Sized for per-session problems after landmark filtering,
  // not large-scale bundle adjustment.
  std::vector<Eigen::Vector3d> x = problem.initial_positions;
  std::vector<Pose> poses = problem.poses;
  double cost = result.initial_cost;
  double lambda = kLambdaInit;
  int accepted = 0;
  bool accepted_any = false;

  const int n_params = ParameterCount(problem);
  bool joint_singular = false;
  for (int iter = 0; iter < kMaxIterations && cost > 1e-24;) {
    Eigen::MatrixXd jac = ReprojectionJacobian(problem, x, poses);
    const Eigen::VectorXd res = ReprojectionResiduals(problem, x, poses);
    for (size_t j = 0; j < x.size(); ++j) {
      if (obs_per_landmark[j] < 2) jac.middleCols(3 * j, 3).setZero();
    }
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n_params, n_params);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(n_params);
    for (size_t i = 0; i < problem.observations.size(); ++i) {
      const double w = HuberWeight(res.segment<2>(2 * i), problem.huber_scale_px);
      const auto ji = jac.middleRows(2 * i, 2);
      h += w * ji.transpose() * ji;
      g += w * ji.transpose() * res.segment<2>(2 * i);
    }

    bool improved = false;
    while (lambda <= kLambdaMax) {
      Eigen::MatrixXd damped = h;
      damped.diagonal().array() += lambda;
      const Eigen::VectorXd step = damped.ldlt().solve(-g);
      if (!step.allFinite()) {
        lambda *= 10.0;
        continue;
      }
      std::vector<Eigen::Vector3d> cand_x = x;
      std::vector<Pose> cand_poses = poses;
      ApplyStep(problem, step, &cand_x, &cand_poses);
      for (size_t j = 0; j < cand_x.size(); ++j) {
        cand_x[j] = ClampToBox(cand_x[j], problem.initial_positions[j], d);
      }
      const double cand_cost = TotalCost(problem, cand_x, cand_poses);
      if (cand_cost < cost) {
        const double rel_decrease = (cost - cand_cost) / std::max(cost, 1e-300);
        x = std::move(cand_x);
        poses = std::move(cand_poses);
        cost = cand_cost;
        lambda = std::max(lambda / 3.0, 1e-12);
        ++iter;
        ++accepted;
        accepted_any = true;
        improved = true;
        if (rel_decrease < kRelCostTol || step.norm() < kStepTol) {
          iter = kMaxIterations;
        }
        break;
      }
      lambda *= 10.0;
    }
    if (!improved) {
      if (!accepted_any && cost > 1e-18 &&
          (g.norm() >= 1e-8 || h.norm() < 1e-12)) {
        joint_singular = true;
      }
      break;
    }
  }

  result.iterations = accepted;
  if (joint_singular) {
    result.status = SolveStatus::kSingular;
    result.final_cost = result.initial_cost;
    return result;
  }
  result.positions = std::move(x);
  result.poses = std::move(poses);
  result.final_cost = cost;
  return result;
}

}  // namespace fruit4d
