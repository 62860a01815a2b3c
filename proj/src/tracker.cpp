#include "fruit4d/tracker.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>

#include "fruit4d/error.hpp"
#include "fruit4d/fusion.hpp"

namespace fruit4d {
namespace {

const Pose* PoseForFrame(const std::vector<Pose>& poses, int frame_id) {
  auto it = std::lower_bound(poses.begin(), poses.end(), frame_id,
                             [](const Pose& p, int f) { return p.frame_id < f; });
  if (it == poses.end() || it->frame_id != frame_id) return nullptr;
  return &*it;
}

int LongestConsecutiveRun(const std::vector<TrackObservation>& obs) {
  int best = 0, run = 0, prev_frame = std::numeric_limits<int>::min();
  for (const TrackObservation& o : obs) {
    run = (o.frame_id == prev_frame + 1) ? run + 1 : 1;
    best = std::max(best, run);
    prev_frame = o.frame_id;
  }
  return best;
}

// Median projected-disk diameter, for tracks whose clouds stayed too sparse
// for the extent estimator.
double MaskDiameterFallback(const Track& track, const DetectionIndex& dets,
                            const std::vector<Pose>& poses,
                            const Intrinsics& k,
                            const Eigen::Vector3d& position) {
  std::vector<double> estimates;
  for (const TrackObservation& o : track.observations) {
    const Detection* det = dets.Find(o.frame_id, o.det_id);
    const Pose* pose = PoseForFrame(poses, o.frame_id);
    if (det == nullptr || pose == nullptr || det->mask.Empty()) continue;
    const double depth = pose->ToCamera(position).z();
    if (depth <= 0.0) continue;
    const double r_px = std::sqrt(static_cast<double>(det->mask.Area()) / M_PI);
    estimates.push_back(2.0 * r_px * depth / k.fx);
  }
  if (estimates.empty()) return 0.0;
  std::nth_element(estimates.begin(), estimates.begin() + estimates.size() / 2,
                   estimates.end());
  return estimates[estimates.size() / 2];
}

}  // namespace

std::optional<Mask> ProjectTrackMask(const PointCloud& cloud_world,
                                     const Pose& to_pose, const Intrinsics& k) {
  std::vector<std::pair<int, int>> pixels;
  pixels.reserve(cloud_world.points.size());
  for (const Eigen::Vector3d& p : cloud_world.points) {
    const auto px = Project(p, to_pose, k);
    if (!px) continue;
    pixels.emplace_back(static_cast<int>(std::lround(px->y())),
                        static_cast<int>(std::lround(px->x())));
  }
  if (pixels.empty()) return std::nullopt;
  Mask m = Mask::FromPixels(to_pose.frame_id, pixels)
               .Closed()
               .ClippedTo(k.width, k.height);
  if (m.Empty()) return std::nullopt;
  return m;
}

AssignmentProblem BuildCostMatrix(const std::vector<Mask>& projected,
                                  const std::vector<const Detection*>& dets,
                                  double min_iou_u) {
  if (!(min_iou_u > 0.0 && min_iou_u < 1.0)) {
    ThrowInvalidInput("cost matrix: u must be in (0,1)");
  }
  const int m = static_cast<int>(projected.size());
  const int n = static_cast<int>(dets.size());
  Eigen::MatrixXd iou_cost(m, n);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      iou_cost(i, j) = 1.0 - MaskIou(projected[i], dets[j]->mask);
    }
  }
  return AssignmentProblem::Augment(iou_cost, 1.0 - min_iou_u);
}

Tracker::Tracker(const TrackerParams& params, const Intrinsics& intrinsics)
    : params_(params), intrinsics_(intrinsics) {}

void Tracker::MergeCloud(Track& track, const PointCloud& cloud) {
  track.instance_cloud.frame = CloudFrame::kWorld;
  track.instance_cloud.points.insert(track.instance_cloud.points.end(),
                                     cloud.points.begin(), cloud.points.end());
  if (static_cast<int>(track.instance_cloud.points.size()) >
      params_.max_track_cloud_points) {
    track.instance_cloud = VoxelDownsample(track.instance_cloud, 0.005);
  }
}

void Tracker::Step(const FrameInput& frame) {
  if (any_frame_ && frame.frame_id <= last_frame_id_) {
    throw Error(ErrorCode::kSequencing,
                "tracker: frame " + std::to_string(frame.frame_id) +
                    " after frame " + std::to_string(last_frame_id_));
  }
  if (frame.detections.size() != frame.instance_clouds.size()) {
    ThrowInvalidInput("tracker: detections/instance_clouds size mismatch");
  }
  any_frame_ = true;
  last_frame_id_ = frame.frame_id;

  // Project matchable tracks into this frame.
  std::vector<int> matchable;  // indices into active_
  std::vector<Mask> projected;
  for (int idx = 0; idx < static_cast<int>(active_.size()); ++idx) {
    const Track& t = active_[idx].track;
    if (static_cast<int>(t.instance_cloud.points.size()) <
        params_.min_cloud_points) {
      continue;
    }
    auto mask = ProjectTrackMask(t.instance_cloud, frame.pose, intrinsics_);
    if (!mask) continue;
    matchable.push_back(idx);
    projected.push_back(std::move(*mask));
  }

  std::vector<const Detection*> dets;
  dets.reserve(frame.detections.size());
  for (const Detection& d : frame.detections) dets.push_back(&d);

  std::vector<char> det_taken(dets.size(), false);
  std::vector<char> track_matched(active_.size(), false);
  if (!matchable.empty() && !dets.empty()) {
    const AssignmentProblem problem =
        BuildCostMatrix(projected, dets, params_.min_iou_u);
    const std::vector<int> assignment = SolveWithUnmatched(problem);
    for (size_t row = 0; row < assignment.size(); ++row) {
      const int col = assignment[row];
      if (col == kUnmatched) continue;
      Slot& slot = active_[matchable[row]];
      slot.track.observations.push_back(
          {frame.frame_id, frame.detections[col].det_id});
      if (frame.instance_clouds[col]) {
        MergeCloud(slot.track, *frame.instance_clouds[col]);
      }
      slot.gap = 0;
      det_taken[col] = true;
      track_matched[matchable[row]] = true;
    }
  }

  // Age unmatched tracks; retire the stale ones.
  std::vector<Slot> survivors;
  survivors.reserve(active_.size());
  for (int idx = 0; idx < static_cast<int>(active_.size()); ++idx) {
    Slot& slot = active_[idx];
    if (!track_matched[idx]) {
      slot.gap += 1;
      if (slot.gap > params_.max_gap) {
        retired_.push_back(std::move(slot.track));
        continue;
      }
    }
    survivors.push_back(std::move(slot));
  }
  active_ = std::move(survivors);

  // Unmatched detections spawn new tracks.
  for (size_t j = 0; j < dets.size(); ++j) {
    if (det_taken[j]) continue;
    Slot slot;
    slot.track.track_id = next_track_id_++;
    slot.track.observations.push_back(
        {frame.frame_id, frame.detections[j].det_id});
    slot.track.instance_cloud.frame = CloudFrame::kWorld;
    if (frame.instance_clouds[j]) {
      MergeCloud(slot.track, *frame.instance_clouds[j]);
    }
    active_.push_back(std::move(slot));
  }
}

std::vector<Track> Tracker::AllTracks() const {
  std::vector<Track> out = retired_;
  for (const Slot& s : active_) out.push_back(s.track);
  std::sort(out.begin(), out.end(),
            [](const Track& a, const Track& b) { return a.track_id < b.track_id; });
  return out;
}

namespace {

struct MergeForest {
  std::vector<int> parent;
  explicit MergeForest(int n) : parent(n) {
    std::iota(parent.begin(), parent.end(), 0);
  }
  int Find(int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
};

std::set<int> FrameSet(const Track& t) {
  std::set<int> frames;
  for (const TrackObservation& o : t.observations) frames.insert(o.frame_id);
  return frames;
}

bool Disjoint(const std::set<int>& a, const std::set<int>& b) {
  for (int f : a) {
    if (b.count(f)) return false;
  }
  return true;
}

// IoU of the two projected clouds in a common image; tries a frame observed
// by the earlier track, then one observed by the later track.
bool ProjectedOverlap(const Track& a, const Track& b,
                      const std::vector<Pose>& poses, const Intrinsics& k,
                      double iou_thresh) {
  const Track& first = a.observations.front().frame_id <=
                               b.observations.front().frame_id
                           ? a
                           : b;
  const Track& second = (&first == &a) ? b : a;
  const int candidates[2] = {first.observations.back().frame_id,
                             second.observations.front().frame_id};
  for (int frame_id : candidates) {
    const Pose* pose = PoseForFrame(poses, frame_id);
    if (pose == nullptr) continue;
    const auto mask_a = ProjectTrackMask(a.instance_cloud, *pose, k);
    const auto mask_b = ProjectTrackMask(b.instance_cloud, *pose, k);
    if (!mask_a || !mask_b) continue;
    if (MaskIou(*mask_a, *mask_b) > iou_thresh) return true;
  }
  return false;
}

}  // namespace

std::vector<Track> Reassociate(const std::vector<Track>& tracks,
                               const std::vector<Pose>& poses,
                               const Intrinsics& k,
                               const TrackerParams& params) {
  const int n = static_cast<int>(tracks.size());
  std::vector<std::optional<Eigen::Vector3d>> centroids(n);
  for (int i = 0; i < n; ++i) {
    if (!tracks[i].instance_cloud.Empty()) {
      centroids[i] = Centroid(tracks[i].instance_cloud);
    }
  }

  MergeForest forest(n);
  std::vector<std::set<int>> component_frames(n);
  for (int i = 0; i < n; ++i) component_frames[i] = FrameSet(tracks[i]);

  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (!centroids[i] || !centroids[j]) continue;
      if ((*centroids[i] - *centroids[j]).norm() >= params.reassoc_dist_m) {
        continue;
      }
      const int ri = forest.Find(i);
      const int rj = forest.Find(j);
      if (ri == rj) continue;
      // Disjointness is required over the whole components, so that every
      // pair of tracks inside a merged component keeps disjoint frames.
      if (!Disjoint(component_frames[ri], component_frames[rj])) continue;
      if (!ProjectedOverlap(tracks[i], tracks[j], poses, k,
                            params.reassoc_iou)) {
        continue;
      }
      forest.parent[rj] = ri;
      component_frames[ri].insert(component_frames[rj].begin(),
                                  component_frames[rj].end());
      component_frames[rj].clear();
    }
  }

  std::map<int, std::vector<int>> components;
  for (int i = 0; i < n; ++i) components[forest.Find(i)].push_back(i);

  std::vector<Track> merged;
  merged.reserve(components.size());
  for (const auto& [root, members] : components) {
    Track t;
    t.track_id = tracks[members.front()].track_id;
    t.instance_cloud.frame = CloudFrame::kWorld;
    for (int idx : members) {
      t.track_id = std::min(t.track_id, tracks[idx].track_id);
      t.observations.insert(t.observations.end(),
                            tracks[idx].observations.begin(),
                            tracks[idx].observations.end());
      t.instance_cloud.points.insert(t.instance_cloud.points.end(),
                                     tracks[idx].instance_cloud.points.begin(),
                                     tracks[idx].instance_cloud.points.end());
    }
    std::sort(t.observations.begin(), t.observations.end(),
              [](const TrackObservation& a, const TrackObservation& b) {
                return a.frame_id < b.frame_id;
              });
    merged.push_back(std::move(t));
  }
  std::sort(merged.begin(), merged.end(),
            [](const Track& a, const Track& b) { return a.track_id < b.track_id; });
  return merged;
}

FinalizeResult Finalize(const std::vector<Track>& tracks,
                        const DetectionIndex& detections,
                        const std::vector<Pose>& poses, const Intrinsics& k,
                        const TrackerParams& params) {
  FinalizeResult result;
  FusionParams fusion_params;
  fusion_params.min_points = params.min_cloud_points;
  int next_fruit_id = 0;
  for (const Track& t : tracks) {
    if (LongestConsecutiveRun(t.observations) < params.min_consecutive) continue;
    if (t.instance_cloud.Empty()) continue;  // no 3D estimate possible

    FruitLandmark lm;
    lm.fruit_id = next_fruit_id++;
    lm.source_track = t.track_id;
    lm.position = Centroid(t.instance_cloud);
    if (static_cast<int>(t.instance_cloud.points.size()) >=
        params.min_cloud_points) {
      lm.diameter = EstimateDiameter(t.instance_cloud, fusion_params);
    }
    if (lm.diameter <= 0.0) {
      lm.diameter = MaskDiameterFallback(t, detections, poses, k, lm.position);
    }
    for (const TrackObservation& o : t.observations) {
      const Detection* det = detections.Find(o.frame_id, o.det_id);
      if (det == nullptr) continue;
      lm.pixel_obs.push_back({o.frame_id, o.det_id, det->centroid_px});
    }
    result.landmarks.push_back(std::move(lm));
  }
  result.count = static_cast<int>(result.landmarks.size());
  return result;
}

}  // namespace fruit4d
