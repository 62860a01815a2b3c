#pragma once

#include <optional>
#include <vector>

#include "fruit4d/hungarian.hpp"
#include "fruit4d/types.hpp"

namespace fruit4d {

struct TrackerParams {
  double min_iou_u = 0.3;        // minimal IoU to consider two masks matched
  int max_gap = 3;               // unmatched frames before retirement
  int min_consecutive = 4;       // observations in a consecutive run to count
  double reassoc_dist_m = 0.2;
  double reassoc_iou = 0.3;
  int min_cloud_points = 5;
  int max_track_cloud_points = 4000;  // downsample beyond this
};

// Projects a world-frame instance cloud into the target view and rasterizes
// it, closing single-pixel holes. Returns nullopt when no point projects
// into the image.
std::optional<Mask> ProjectTrackMask(const PointCloud& cloud_world,
                                     const Pose& to_pose, const Intrinsics& k);

// 1 - IoU block between projected track masks and detection masks, augmented
// with an unmatched block of 1 - u.
AssignmentProblem BuildCostMatrix(const std::vector<Mask>& projected,
                                  const std::vector<const Detection*>& dets,
                                  double min_iou_u);

struct FrameInput {
  int frame_id = 0;
  Pose pose;
  std::vector<Detection> detections;
  // Parallel to detections; nullopt when instance extraction was deferred.
  std::vector<std::optional<PointCloud>> instance_clouds;
};

// Frame-to-frame association of detections into tracks via Hungarian
// assignment on projected-mask IoU.
class Tracker {
 public:
  Tracker(const TrackerParams& params, const Intrinsics& intrinsics);

  // Frames must arrive in strictly increasing frame_id order.
  void Step(const FrameInput& frame);

  // Active plus retired tracks, sorted by track id.
  std::vector<Track> AllTracks() const;

 private:
  struct Slot {
    Track track;
    int gap = 0;  // consecutive frames without a match
  };

  void MergeCloud(Track& track, const PointCloud& cloud);

  TrackerParams params_;
  Intrinsics intrinsics_;
  std::vector<Slot> active_;
  std::vector<Track> retired_;
  int next_track_id_ = 0;
  int last_frame_id_ = -1;
  bool any_frame_ = false;
};

// Merges tracks that are duplicates of one fruit separated by an occlusion
// gap: centroids within reassoc_dist_m, projected clouds overlapping with
// IoU > reassoc_iou in a common image, and disjoint frame sets. Merging is a
// transitive closure, but a merge is only applied while the combined frame
// sets stay disjoint.
std::vector<Track> Reassociate(const std::vector<Track>& tracks,
                               const std::vector<Pose>& poses,
                               const Intrinsics& k,
                               const TrackerParams& params);

struct FinalizeResult {
  std::vector<FruitLandmark> landmarks;
  int count = 0;
};

// Keeps tracks with at least min_consecutive observations in a run of
// consecutive frame ids; landmark position is the track-cloud centroid.
FinalizeResult Finalize(const std::vector<Track>& tracks,
                        const DetectionIndex& detections,
                        const std::vector<Pose>& poses, const Intrinsics& k,
                        const TrackerParams& params);

}  // namespace fruit4d
