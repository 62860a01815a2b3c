#pragma once

#include <optional>
#include <vector>

#include <Eigen/Core>

#include "fruit4d/types.hpp"

namespace fruit4d {

struct TimedCloud {
  int frame_id = 0;
  double timestamp = 0.0;
  PointCloud cloud;  // sensor or world frame
};

struct FusionParams {
  double window_s = 1.5;           // accumulation window, centered
  int min_points = 5;              // below this the 3D estimate is deferred
  double depth_band_mad_scale = 1.5;
  double trim_fraction = 0.05;     // diameter estimator trim
};

// Union of all clouds with timestamp in [t - window/2, t + window/2],
// expressed in the world frame. Sensor-frame clouds are lifted with the pose
// of their own frame_id. Throws Error(kEmptyWindow) when nothing falls in
// the window.
PointCloud Accumulate(const std::vector<TimedCloud>& clouds,
                      const std::vector<Pose>& poses, double t,
                      double window_s);

// Subset of `accumulated` (world frame) whose projections land inside the
// detection mask with positive depth, then band-filtered around the median
// depth (+-scale * MAD). Returns nullopt when fewer than min_points project
// into the mask.
std::optional<PointCloud> ExtractInstanceCloud(const PointCloud& accumulated,
                                               const Detection& det,
                                               const Pose& pose,
                                               const Intrinsics& k,
                                               const FusionParams& params = {});

// The median/MAD depth filter of ExtractInstanceCloud, exposed so batch
// extraction over many detections shares the exact same rule.
PointCloud DepthBandFilter(const std::vector<Eigen::Vector3d>& points,
                           const std::vector<double>& depths,
                           const FusionParams& params);

// One extraction per detection of a frame, sharing a single projection pass
// over the accumulated cloud. Equivalent to calling ExtractInstanceCloud per
// detection.
std::vector<std::optional<PointCloud>> ExtractInstanceClouds(
    const PointCloud& accumulated, const std::vector<Detection>& detections,
    const Pose& pose, const Intrinsics& k, const FusionParams& params = {});

// Arithmetic mean of the points. Throws on an empty cloud.
Eigen::Vector3d Centroid(const PointCloud& cloud);

// Robust extent estimate: drop the trim_fraction of points most distant from
// the centroid, then average the three axis-aligned extents. Throws when the
// cloud has fewer than min_points points.
double EstimateDiameter(const PointCloud& cloud,
                        const FusionParams& params = {});

// One averaged point per occupied voxel, output ordered by voxel key.
PointCloud VoxelDownsample(const PointCloud& cloud, double voxel_m);

}  // namespace fruit4d
