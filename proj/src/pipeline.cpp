#include "fruit4d/pipeline.hpp"

#include <algorithm>
#include <map>

#include "fruit4d/error.hpp"
#include "fruit4d/reprojection.hpp"

namespace fruit4d {

std::vector<FruitLandmark> TrackSession(const SessionMap& map,
                                        const std::vector<TimedCloud>& clouds,
                                        const PipelineConfig& config) {
  map.Validate();
  const FusionParams fusion_params = config.MakeFusionParams();
  const TrackerParams tracker_params = config.MakeTrackerParams();

  // Lift sensor clouds into the world frame once.
  std::vector<TimedCloud> world_clouds;
  world_clouds.reserve(clouds.size());
  for (const TimedCloud& tc : clouds) {
    TimedCloud wc;
    wc.frame_id = tc.frame_id;
    wc.timestamp = tc.timestamp;
    wc.cloud.frame = CloudFrame::kWorld;
    if (tc.cloud.frame == CloudFrame::kWorld) {
      wc.cloud.points = tc.cloud.points;
    } else {
      const Pose* pose = map.FindPose(tc.frame_id);
      if (pose == nullptr) {
        ThrowInvalidInput("track: cloud frame " + std::to_string(tc.frame_id) +
                          " has no pose");
      }
      wc.cloud.points.reserve(tc.cloud.Size());
      for (const Eigen::Vector3d& p : tc.cloud.points) {
        wc.cloud.points.push_back(pose->ToWorld(p));
      }
    }
    world_clouds.push_back(std::move(wc));
  }

  std::map<int, std::vector<Detection>> dets_by_frame;
  for (const Detection& d : map.detections) {
    dets_by_frame[d.frame_id].push_back(d);
  }

  Tracker tracker(tracker_params, map.intrinsics);
  for (const Pose& pose : map.poses) {
    FrameInput input;
    input.frame_id = pose.frame_id;
    input.pose = pose;
    const auto it = dets_by_frame.find(pose.frame_id);
    if (it != dets_by_frame.end()) input.detections = it->second;
    input.instance_clouds.assign(input.detections.size(), std::nullopt);
    if (!input.detections.empty()) {
      PointCloud accumulated;
      bool have_cloud = true;
      try {
        accumulated = Accumulate(world_clouds, map.poses, pose.timestamp,
                                 fusion_params.window_s);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kEmptyWindow) throw;
        have_cloud = false;  // detections tracked without a 3D estimate
      }
      if (have_cloud && !accumulated.Empty()) {
        input.instance_clouds = ExtractInstanceClouds(
            accumulated, input.detections, pose, map.intrinsics, fusion_params);
      }
    }
    tracker.Step(input);
  }

  std::vector<Track> tracks = tracker.AllTracks();
  tracks = Reassociate(tracks, map.poses, map.intrinsics, tracker_params);
  const DetectionIndex det_index(map.detections);
  FinalizeResult finalized =
      Finalize(tracks, det_index, map.poses, map.intrinsics, tracker_params);

  // Reprojection refinement over the finalized landmarks.
  if (!finalized.landmarks.empty()) {
    std::map<int, int> pose_index;
    for (size_t i = 0; i < map.poses.size(); ++i) {
      pose_index[map.poses[i].frame_id] = static_cast<int>(i);
    }
    ReprojectionProblem problem;
    problem.poses = map.poses;
    problem.intrinsics = map.intrinsics;
    problem.box_halfwidth_m = config.box_halfwidth_m;
    problem.optimize_poses = config.optimize_poses;
    problem.huber_scale_px = config.huber_scale_px;
    for (size_t j = 0; j < finalized.landmarks.size(); ++j) {
      problem.initial_positions.push_back(finalized.landmarks[j].position);
      for (const PixelObservation& obs : finalized.landmarks[j].pixel_obs) {
        problem.observations.push_back(
            {pose_index.at(obs.frame_id), static_cast<int>(j), obs.pixel});
      }
    }
    const ReprojectionResult refined = Optimize(problem);
    for (size_t j = 0; j < finalized.landmarks.size(); ++j) {
      finalized.landmarks[j].position = refined.positions[j];
    }
  }
  return finalized.landmarks;
}

AssociationMethod ParseMethod(const std::string& name) {
  if (name == "proposed") return AssociationMethod::kProposed;
  if (name == "position") return AssociationMethod::kPosition;
  if (name == "histogram") return AssociationMethod::kHistogram;
  ThrowInvalidInput("unknown association method: " + name);
}

std::string MethodName(AssociationMethod method) {
  switch (method) {
    case AssociationMethod::kProposed:
      return "proposed";
    case AssociationMethod::kPosition:
      return "position";
    case AssociationMethod::kHistogram:
      return "histogram";
  }
  return "unknown";
}

TemporalMatchSet RunAssociation(const SessionMap& a, const SessionMap& b,
                                const RigidTransform& a_to_b,
                                AssociationMethod method,
                                const PipelineConfig& config) {
  switch (method) {
    case AssociationMethod::kProposed:
      return Associate(a, b, a_to_b, config.MakeCostWeights());
    case AssociationMethod::kPosition:
      return BaselinePosition(a, b, a_to_b, config.gate_distance_m);
    case AssociationMethod::kHistogram: {
      HistogramBaselineParams params;
      params.gate_distance_m = config.gate_distance_m;
      return BaselineHistogram(a, b, a_to_b, params);
    }
  }
  ThrowInvalidInput("unknown association method");
}

}  // namespace fruit4d
