#include <random>

#include "doctest.h"
#include "fruit4d/reprojection.hpp"

using namespace fruit4d;

namespace {

Intrinsics TestIntrinsics() {
  Intrinsics k;
  k.fx = 500.0;
  k.fy = 500.0;
  k.cx = 320.0;
  k.cy = 240.0;
  k.width = 640;
  k.height = 480;
  return k;
}

// Cameras on a lateral baseline, all looking down +z with slight jitter.
std::vector<Pose> LateralRig(int n_poses, std::mt19937& rng) {
  std::uniform_real_distribution<double> u(-0.05, 0.05);
  std::vector<Pose> poses;
  for (int i = 0; i < n_poses; ++i) {
    Pose p;
    p.frame_id = i;
    p.translation = {0.4 * i + u(rng), u(rng), u(rng)};
    Eigen::Vector3d axis(u(rng), u(rng), 1.0);
    axis.normalize();
    p.rotation = Eigen::Quaterniond(Eigen::AngleAxisd(0.2 * u(rng), axis));
    poses.push_back(p);
  }
  return poses;
}

// Exact synthetic problem: residuals vanish at ground truth.
ReprojectionProblem ExactProblem(int n_poses, int n_landmarks, unsigned seed,
                                 std::vector<Eigen::Vector3d>* truth = nullptr) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(-0.6, 0.6);
  ReprojectionProblem problem;
  problem.intrinsics = TestIntrinsics();
  problem.poses = LateralRig(n_poses, rng);

  std::vector<Eigen::Vector3d> gt;
  for (int j = 0; j < n_landmarks; ++j) {
    gt.push_back({0.4 * (n_poses - 1) / 2.0 + u(rng), u(rng), 2.0 + 0.5 * u(rng)});
  }
  for (int i = 0; i < n_poses; ++i) {
    for (int j = 0; j < n_landmarks; ++j) {
      const auto px = Project(gt[j], problem.poses[i], problem.intrinsics);
      if (!px) continue;
      problem.observations.push_back({i, j, *px});
    }
  }
  problem.initial_positions = gt;
  if (truth != nullptr) *truth = gt;
  return problem;
}

Eigen::MatrixXd FiniteDifferenceJacobian(const ReprojectionProblem& problem,
                                         const std::vector<Eigen::Vector3d>& x,
                                         const std::vector<Pose>& poses) {
  const int n = ParameterCount(problem);
  const double h = 1e-6;
  Eigen::MatrixXd fd(2 * problem.observations.size(), n);
  for (int c = 0; c < n; ++c) {
    Eigen::VectorXd step = Eigen::VectorXd::Zero(n);
    step[c] = h;
    auto xp = x;
    auto pp = poses;
    ApplyStep(problem, step, &xp, &pp);
    step[c] = -h;
    auto xm = x;
    auto pm = poses;
    ApplyStep(problem, step, &xm, &pm);
    fd.col(c) = (ReprojectionResiduals(problem, xp, pp) -
                 ReprojectionResiduals(problem, xm, pm)) /
                (2.0 * h);
  }
  return fd;
}

}  // namespace

TEST_CASE("residuals: exact geometry gives an all-zero vector") {
  const ReprojectionProblem problem = ExactProblem(5, 3, 7);
  const Eigen::VectorXd r =
      ReprojectionResiduals(problem, problem.initial_positions, problem.poses);
  CHECK(r.norm() < 1e-9);
}

TEST_CASE("residuals: 0.1 m lateral offset at 2 m depth is 25 px") {
  ReprojectionProblem problem;
  problem.intrinsics = TestIntrinsics();
  problem.poses.push_back(Pose{});
  const Eigen::Vector3d truth(0.0, 0.0, 2.0);
  problem.observations.push_back(
      {0, 0, *Project(truth, problem.poses[0], problem.intrinsics)});
  problem.initial_positions = {truth + Eigen::Vector3d(0.1, 0.0, 0.0)};
  const Eigen::VectorXd r =
      ReprojectionResiduals(problem, problem.initial_positions, problem.poses);
  CHECK(r.norm() == doctest::Approx(25.0).epsilon(1e-9));
}

TEST_CASE("residuals: landmark behind camera is capped and finite") {
  ReprojectionProblem problem;
  problem.intrinsics = TestIntrinsics();
  problem.poses.push_back(Pose{});
  problem.observations.push_back({0, 0, {320.0, 240.0}});
  problem.initial_positions = {{0.0, 0.0, -1.0}};
  const Eigen::VectorXd r =
      ReprojectionResiduals(problem, problem.initial_positions, problem.poses);
  CHECK(r.allFinite());
  CHECK(r.norm() == doctest::Approx(problem.intrinsics.ImageDiagonal()));
}

TEST_CASE("jacobian matches central finite differences, positions only") {
  std::mt19937 rng(99);
  std::uniform_real_distribution<double> u(-0.02, 0.02);
  for (int trial = 0; trial < 40; ++trial) {
    ReprojectionProblem problem = ExactProblem(4, 3, 100 + trial);
    for (auto& x : problem.initial_positions) {
      x += Eigen::Vector3d(u(rng), u(rng), u(rng));
    }
    const Eigen::MatrixXd analytic = ReprojectionJacobian(
        problem, problem.initial_positions, problem.poses);
    const Eigen::MatrixXd fd = FiniteDifferenceJacobian(
        problem, problem.initial_positions, problem.poses);
    const double rel = (analytic - fd).norm() / std::max(1.0, fd.norm());
    CHECK(rel < 1e-4);
  }
}

TEST_CASE("jacobian matches central finite differences with pose deltas") {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> u(-0.02, 0.02);
  for (int trial = 0; trial < 20; ++trial) {
    ReprojectionProblem problem = ExactProblem(3, 2, 500 + trial);
    problem.optimize_poses = true;
    for (auto& x : problem.initial_positions) {
      x += Eigen::Vector3d(u(rng), u(rng), u(rng));
    }
    const Eigen::MatrixXd analytic = ReprojectionJacobian(
        problem, problem.initial_positions, problem.poses);
    const Eigen::MatrixXd fd = FiniteDifferenceJacobian(
        problem, problem.initial_positions, problem.poses);
    const double rel = (analytic - fd).norm() / std::max(1.0, fd.norm());
    CHECK(rel < 1e-4);
  }
}

TEST_CASE("optimize: zero-residual start returns the input unchanged") {
  const ReprojectionProblem problem = ExactProblem(5, 3, 17);
  const ReprojectionResult res = Optimize(problem);
  CHECK(res.iterations == 0);
  CHECK(res.final_cost == doctest::Approx(0.0));
  for (size_t j = 0; j < problem.initial_positions.size(); ++j) {
    CHECK((res.positions[j] - problem.initial_positions[j]).norm() == 0.0);
  }
}

TEST_CASE("optimize: 5 cm perturbation with 5 exact views recovers to 1 mm") {
  std::vector<Eigen::Vector3d> truth;
  ReprojectionProblem problem = ExactProblem(5, 4, 23, &truth);
  std::mt19937 rng(31);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto& x : problem.initial_positions) {
    Eigen::Vector3d dir(u(rng), u(rng), u(rng));
    dir.normalize();
    x += 0.05 * dir;
  }
  const ReprojectionResult res = Optimize(problem);
  CHECK(res.final_cost < res.initial_cost);
  for (size_t j = 0; j < truth.size(); ++j) {
    CHECK((res.positions[j] - truth[j]).norm() < 1e-3);
  }
}

TEST_CASE("optimize: active box constraint clamps to the face") {
  std::vector<Eigen::Vector3d> truth;
  ReprojectionProblem problem = ExactProblem(5, 1, 29, &truth);
  problem.box_halfwidth_m = 0.1;
  problem.initial_positions[0] = truth[0] + Eigen::Vector3d(0.3, 0.0, 0.0);
  const ReprojectionResult res = Optimize(problem);
  CHECK(res.final_cost < res.initial_cost);
  const Eigen::Vector3d deviation =
      (res.positions[0] - problem.initial_positions[0]).cwiseAbs();
  CHECK(deviation.maxCoeff() <= problem.box_halfwidth_m + 1e-15);
  // The x direction has 0.3 m to make up but only 0.1 m of slack.
  CHECK(deviation.x() == doctest::Approx(problem.box_halfwidth_m));
}

TEST_CASE("optimize: outputs always satisfy the box exactly") {
  std::mt19937 rng(41);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    ReprojectionProblem problem = ExactProblem(4, 3, 600 + trial);
    problem.box_halfwidth_m = 0.02;
    for (auto& x : problem.initial_positions) {
      x += Eigen::Vector3d(0.05 * u(rng), 0.05 * u(rng), 0.05 * u(rng));
    }
    const ReprojectionResult res = Optimize(problem);
    for (size_t j = 0; j < res.positions.size(); ++j) {
      const Eigen::Vector3d dev =
          (res.positions[j] - problem.initial_positions[j]).cwiseAbs();
      CHECK(dev.maxCoeff() <= problem.box_halfwidth_m + 1e-15);
    }
    CHECK(res.final_cost <= res.initial_cost);
  }
}

TEST_CASE("optimize: landmarks with under two views pass through") {
  ReprojectionProblem problem;
  problem.intrinsics = TestIntrinsics();
  problem.poses.push_back(Pose{});
  problem.initial_positions = {{0.1, 0.1, 2.0}};
  problem.observations.push_back({0, 0, {100.0, 100.0}});
  const ReprojectionResult res = Optimize(problem);
  CHECK((res.positions[0] - problem.initial_positions[0]).norm() == 0.0);
}

TEST_CASE("optimize: single landmark decouples from the joint solve") {
  std::vector<Eigen::Vector3d> truth;
  ReprojectionProblem joint = ExactProblem(5, 3, 53, &truth);
  std::mt19937 rng(59);
  std::uniform_real_distribution<double> u(-0.03, 0.03);
  for (auto& x : joint.initial_positions) {
    x += Eigen::Vector3d(u(rng), u(rng), u(rng));
  }
  const ReprojectionResult joint_res = Optimize(joint);

  for (int j = 0; j < 3; ++j) {
    ReprojectionProblem single = joint;
    single.initial_positions = {joint.initial_positions[j]};
    single.observations.clear();
    for (const auto& obs : joint.observations) {
      if (obs.landmark_index == j) single.observations.push_back({obs.pose_index, 0, obs.pixel});
    }
    const ReprojectionResult single_res = Optimize(single);
    CHECK((single_res.positions[0] - joint_res.positions[j]).norm() < 1e-9);
  }
}

TEST_CASE("optimize: joint pose refinement reduces an injected pose error") {
  std::vector<Eigen::Vector3d> truth;
  ReprojectionProblem problem = ExactProblem(4, 6, 61, &truth);
  problem.optimize_poses = true;
  problem.box_halfwidth_m = 0.3;
  // Perturb one non-gauge pose and all landmarks a little.
  problem.poses[2].translation += Eigen::Vector3d(0.02, -0.01, 0.015);
  std::mt19937 rng(67);
  std::uniform_real_distribution<double> u(-0.01, 0.01);
  for (auto& x : problem.initial_positions) {
    x += Eigen::Vector3d(u(rng), u(rng), u(rng));
  }
  const ReprojectionResult res = Optimize(problem);
  CHECK(res.final_cost < 1e-6);
  CHECK(res.final_cost < res.initial_cost);
  // Gauge pose untouched.
  CHECK((res.poses[0].translation - problem.poses[0].translation).norm() == 0.0);
}

TEST_CASE("optimize: all observations behind the camera reports a warning") {
  ReprojectionProblem problem;
  problem.intrinsics = TestIntrinsics();
  problem.poses.push_back(Pose{});
  Pose second;
  second.frame_id = 1;
  second.translation = {0.1, 0.0, 0.0};
  problem.poses.push_back(second);
  problem.initial_positions = {{0.0, 0.0, -2.0}};
  problem.observations.push_back({0, 0, {320.0, 240.0}});
  problem.observations.push_back({1, 0, {320.0, 240.0}});
  const ReprojectionResult res = Optimize(problem);
  CHECK(res.status == SolveStatus::kSingular);
  CHECK((res.positions[0] - problem.initial_positions[0]).norm() == 0.0);
}
