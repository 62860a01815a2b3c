#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "fruit4d/fusion.hpp"
#include "fruit4d/registration.hpp"
#include "fruit4d/types.hpp"

namespace fruit4d {

// One data-collection pass and the temporal changes applied before it.
struct SessionSpec {
  std::string date_tag;
  double growth_scale = 1.0;          // >= 1
  double position_drift_sigma_m = 0.0;
  double removal_fraction = 0.0;      // [0, 1)
  double miss_detection_rate = 0.0;   // [0, 1)
  double perturb_yaw_deg = 0.0;       // session frame vs. base frame
  Eigen::Vector3d perturb_translation = Eigen::Vector3d::Zero();
};

struct CameraPathSpec {
  double speed_mps = 1.0;
  double frame_rate_hz = 4.0;
  double standoff_m = 2.0;
};

struct OrchardSpec {
  uint64_t seed = 1;
  int n_trees = 2;
  int fruits_per_tree_min = 25;
  int fruits_per_tree_max = 35;
  double fruit_diameter_min_m = 0.065;
  double fruit_diameter_max_m = 0.095;
  double row_spacing_m = 1.2;
  CameraPathSpec camera;
  double lidar_density_pts_m2_at_2m = 6000.0;
  double lidar_noise_sigma_m = 0.002;
  int embedding_dim = 16;
  double embedding_noise_sigma = 0.25;
  int frame_embedding_dim = 8;
  int image_width = 640;
  int image_height = 480;
  double fx = 500.0;
  double fy = 500.0;
  double crown_radius_m = 0.45;
  double crown_center_height_m = 1.6;
  // Minimum lateral (image-plane) separation between fruits of a tree, in
  // units of the mean fruit diameter.
  double min_fruit_separation_factor = 1.8;
  int canopy_blobs_per_tree = 6;
  double canopy_blob_radius_m = 0.09;
  double background_density_scale = 0.25;
  // A fruit is occluded when a nearer disk covers its center within this
  // fraction of the occluder radius; 0 disables occlusion.
  double occlusion_factor = 0.7;
  double growth_sag_m_per_unit_scale = 0.05;
  std::vector<SessionSpec> sessions;

  void Validate() const;  // throws Error(kInvalidInput)
};

struct WorldFruit {
  int fruit_id = 0;
  int tree_id = 0;
  Eigen::Vector3d base_position = Eigen::Vector3d::Zero();
  double base_diameter = 0.0;
  std::vector<float> latent;
};

struct SessionFruitState {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();  // base frame
  double diameter = 0.0;
  bool removed = false;
};

struct CanopyBlob {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double radius = 0.0;
  int tree_id = 0;
};

// Ground-truth world: fruit identities plus their per-session states. All
// geometry is kept in the shared base frame; session_frames maps base
// coordinates into each session's own odometry frame.
struct World {
  OrchardSpec spec;
  std::vector<Eigen::Vector3d> tree_centers;
  std::vector<WorldFruit> fruits;
  std::vector<CanopyBlob> blobs;
  std::vector<std::vector<SessionFruitState>> session_states;
  std::vector<RigidTransform> session_frames;

  // Maps coordinates of session `from` into coordinates of session `to`.
  RigidTransform SessionTransform(int from, int to) const;
};

// Deterministic function of spec.seed.
World Generate(const OrchardSpec& spec);

struct RenderedSession {
  SessionMap map;                  // poses, detections, embeddings, reg. cloud
  std::vector<TimedCloud> clouds;  // per-frame LiDAR, sensor frame
  std::map<std::pair<int, int>, int> detection_truth;  // (frame, det) -> fruit
  std::vector<int> removed_fruits;
};

RenderedSession RenderSession(const World& world, int session_index);

}  // namespace fruit4d
