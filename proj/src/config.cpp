#include "fruit4d/config.hpp"

#include <fstream>

#include "json.hpp"

#include "fruit4d/error.hpp"

namespace fruit4d {
namespace {

using nlohmann::json;

template <typename T>
void Load(const json& j, const char* key, T* out) {
  if (j.contains(key)) *out = j.at(key).get<T>();
}

}  // namespace

FusionParams PipelineConfig::MakeFusionParams() const {
  FusionParams p;
  p.window_s = accumulate_window_s;
  p.min_points = min_points;
  p.depth_band_mad_scale = depth_band_mad_scale;
  return p;
}

TrackerParams PipelineConfig::MakeTrackerParams() const {
  TrackerParams p;
  p.min_iou_u = min_iou_u;
  p.max_gap = max_gap;
  p.min_consecutive = min_track_len;
  p.reassoc_dist_m = reassoc_dist_m;
  p.reassoc_iou = min_iou_u;
  p.min_cloud_points = min_points;
  return p;
}

CostWeights PipelineConfig::MakeCostWeights() const {
  CostWeights w;
  w.gate_distance_m = gate_distance_m;
  w.entropy_threshold_bits = entropy_threshold_bits;
  w.angle_threshold_deg = angle_threshold_deg;
  w.topology_weight = topology_weight;
  w.no_match_cost = no_match_cost;
  return w;
}

std::string PipelineConfig::ToJson() const {
  json j;
  j["accumulate_window_s"] = accumulate_window_s;
  j["min_points"] = min_points;
  j["depth_band_mad_scale"] = depth_band_mad_scale;
  j["min_iou_u"] = min_iou_u;
  j["max_gap"] = max_gap;
  j["min_track_len"] = min_track_len;
  j["reassoc_dist_m"] = reassoc_dist_m;
  j["box_halfwidth_m"] = box_halfwidth_m;
  j["optimize_poses"] = optimize_poses;
  j["huber_scale_px"] = huber_scale_px;
  j["gate_distance_m"] = gate_distance_m;
  j["entropy_threshold_bits"] = entropy_threshold_bits;
  j["angle_threshold_deg"] = angle_threshold_deg;
  j["topology_weight"] = topology_weight;
  j["no_match_cost"] = no_match_cost;
  j["icp"] = {{"voxel_size_m", icp.voxel_size_m},
              {"max_correspondence_m", icp.max_correspondence_m},
              {"max_iterations", icp.max_iterations},
              {"transform_tolerance", icp.transform_tolerance},
              {"min_inlier_fraction", icp.min_inlier_fraction},
              {"normal_neighbors", icp.normal_neighbors},
              {"min_cloud_points", icp.min_cloud_points}};
  j["seed"] = seed;
  return j.dump(2) + "\n";
}

PipelineConfig PipelineConfig::FromJsonText(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("config: ") + e.what());
  }
  PipelineConfig c;
  try {
    Load(j, "accumulate_window_s", &c.accumulate_window_s);
    Load(j, "min_points", &c.min_points);
    Load(j, "depth_band_mad_scale", &c.depth_band_mad_scale);
    Load(j, "min_iou_u", &c.min_iou_u);
    Load(j, "max_gap", &c.max_gap);
    Load(j, "min_track_len", &c.min_track_len);
    Load(j, "reassoc_dist_m", &c.reassoc_dist_m);
    Load(j, "box_halfwidth_m", &c.box_halfwidth_m);
    Load(j, "optimize_poses", &c.optimize_poses);
    Load(j, "huber_scale_px", &c.huber_scale_px);
    Load(j, "gate_distance_m", &c.gate_distance_m);
    Load(j, "entropy_threshold_bits", &c.entropy_threshold_bits);
    Load(j, "angle_threshold_deg", &c.angle_threshold_deg);
    Load(j, "topology_weight", &c.topology_weight);
    Load(j, "no_match_cost", &c.no_match_cost);
    if (j.contains("icp")) {
      const json& i = j.at("icp");
      Load(i, "voxel_size_m", &c.icp.voxel_size_m);
      Load(i, "max_correspondence_m", &c.icp.max_correspondence_m);
      Load(i, "max_iterations", &c.icp.max_iterations);
      Load(i, "transform_tolerance", &c.icp.transform_tolerance);
      Load(i, "min_inlier_fraction", &c.icp.min_inlier_fraction);
      Load(i, "normal_neighbors", &c.icp.normal_neighbors);
      Load(i, "min_cloud_points", &c.icp.min_cloud_points);
    }
    Load(j, "seed", &c.seed);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("config: ") + e.what());
  }
  if (!(c.min_iou_u > 0.0 && c.min_iou_u < 1.0)) {
    ThrowInvalidInput("config: min_iou_u outside (0,1)");
  }
  if (c.min_track_len < 1 || c.max_gap < 0 || c.min_points < 1) {
    ThrowInvalidInput("config: bad tracker bounds");
  }
  c.MakeCostWeights().Validate();
  return c;
}

PipelineConfig PipelineConfig::FromJsonFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "config: cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return FromJsonText(text);
}

}  // namespace fruit4d
