#pragma once

#include <cstdint>
#include <string>

#include "fruit4d/association.hpp"
#include "fruit4d/fusion.hpp"
#include "fruit4d/registration.hpp"
#include "fruit4d/tracker.hpp"

namespace fruit4d {

// Every tunable of the pipeline in one place, loadable from a JSON file and
// overridable from the command line.
struct PipelineConfig {
  // fusion
  double accumulate_window_s = 1.5;
  int min_points = 5;
  double depth_band_mad_scale = 1.5;
  // tracker
  double min_iou_u = 0.3;
  int max_gap = 3;
  int min_track_len = 4;  // observations in a consecutive run
  double reassoc_dist_m = 0.2;
  // reprojection refinement
  double box_halfwidth_m = 0.15;
  bool optimize_poses = false;
  double huber_scale_px = 3.0;
  // 4D association
  double gate_distance_m = 0.3;
  double entropy_threshold_bits = 0.8;
  double angle_threshold_deg = 10.0;
  double topology_weight = 0.5;
  double no_match_cost = 1.0;
  // registration
  IcpParams icp;
  // shared
  uint64_t seed = 1;

  FusionParams MakeFusionParams() const;
  TrackerParams MakeTrackerParams() const;
  CostWeights MakeCostWeights() const;

  std::string ToJson() const;                      // pretty-printed
  static PipelineConfig FromJsonText(const std::string& text);
  static PipelineConfig FromJsonFile(const std::string& path);
};

}  // namespace fruit4d
