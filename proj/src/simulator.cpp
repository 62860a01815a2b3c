#include "fruit4d/simulator.hpp"

#include <algorithm>
#include <cmath>

#include "fruit4d/error.hpp"
#include "fruit4d/geometry.hpp"

namespace fruit4d {
namespace {

uint64_t SplitMix64(uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Deterministic RNG with explicit sub-streams, so outputs do not depend on
// library distribution internals or evaluation order elsewhere.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed ^ 0xda3e39cb94b95bdbULL) {}

  Rng Fork(uint64_t a, uint64_t b = 0, uint64_t c = 0) const {
    uint64_t mix = state_;
    mix ^= 0x9e3779b97f4a7c15ULL + (a << 1);
    SplitMix64(mix);
    mix ^= 0xc2b2ae3d27d4eb4fULL + (b << 1);
    SplitMix64(mix);
    mix ^= 0x165667b19e3779f9ULL + (c << 1);
    Rng out(SplitMix64(mix));
    return out;
  }

  double Uniform() {  // [0, 1)
    return static_cast<double>(SplitMix64(state_) >> 11) * 0x1.0p-53;
  }
  double Range(double lo, double hi) { return lo + (hi - lo) * Uniform(); }
  int Int(int lo, int hi) {  // inclusive
    return lo + static_cast<int>(SplitMix64(state_) %
                                 static_cast<uint64_t>(hi - lo + 1));
  }
  double Gauss() {
    const double u1 = std::max(Uniform(), 1e-300);
    const double u2 = Uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }
  Eigen::Vector3d Gauss3() { return {Gauss(), Gauss(), Gauss()}; }
  Eigen::Vector3d UnitVector() {
    Eigen::Vector3d v;
    do {
      v = Gauss3();
    } while (v.norm() < 1e-9);
    return v.normalized();
  }

 private:
  uint64_t state_;
};

// Base camera orientation: x along the row, optical axis toward the trees
// (+y), image rows growing downward (-z).
Eigen::Quaterniond BaseCameraRotation() {
  Eigen::Matrix3d r;
  r.col(0) = Eigen::Vector3d::UnitX();   // camera x
  r.col(1) = -Eigen::Vector3d::UnitZ();  // camera y (down)
  r.col(2) = Eigen::Vector3d::UnitY();   // camera z (forward)
  return Eigen::Quaterniond(r);
}

RigidTransform SessionFrame(const SessionSpec& spec) {
  RigidTransform t;
  t.rotation = Eigen::Quaterniond(Eigen::AngleAxisd(
      spec.perturb_yaw_deg * M_PI / 180.0, Eigen::Vector3d::UnitZ()));
  t.translation = spec.perturb_translation;
  return t;
}

struct DiskObstacle {
  Eigen::Vector2d center_px;
  double radius_px = 0.0;
  double depth = 0.0;
};

int PoissonishCount(double expected, Rng& rng) {
  const int base = static_cast<int>(std::floor(expected));
  const double frac = expected - base;
  return base + (rng.Uniform() < frac ? 1 : 0);
}

// Surface samples on the camera-facing hemisphere of a sphere.
void SampleSphereBand(const Eigen::Vector3d& center, double radius,
                      const Eigen::Vector3d& cam_pos, double density_at_2m,
                      double noise_sigma, Rng& rng,
                      std::vector<Eigen::Vector3d>* out) {
  const double dist = (center - cam_pos).norm();
  if (dist < 1e-6) return;
  const double expected =
      density_at_2m * M_PI * radius * radius * (4.0 / (dist * dist));
  const int count = PoissonishCount(expected, rng);
  const Eigen::Vector3d toward = (center - cam_pos).normalized();
  for (int i = 0; i < count; ++i) {
    Eigen::Vector3d n = rng.UnitVector();
    if (n.dot(toward) > 0.0) n = -n;
    out->push_back(center + radius * n + noise_sigma * rng.Gauss3());
  }
}

}  // namespace

void OrchardSpec::Validate() const {
  if (n_trees < 1) ThrowInvalidInput("spec: n_trees < 1");
  if (fruits_per_tree_min < 1 || fruits_per_tree_max < fruits_per_tree_min) {
    ThrowInvalidInput("spec: bad fruits_per_tree range");
  }
  if (!(fruit_diameter_min_m > 0.0) ||
      fruit_diameter_max_m < fruit_diameter_min_m) {
    ThrowInvalidInput("spec: bad fruit_diameter range");
  }
  if (sessions.empty()) ThrowInvalidInput("spec: no sessions");
  for (const SessionSpec& s : sessions) {
    if (s.removal_fraction < 0.0 || s.removal_fraction >= 1.0) {
      ThrowInvalidInput("spec: removal_fraction outside [0, 1)");
    }
    if (s.miss_detection_rate < 0.0 || s.miss_detection_rate >= 1.0) {
      ThrowInvalidInput("spec: miss_detection_rate outside [0, 1)");
    }
    if (s.growth_scale < 1.0) ThrowInvalidInput("spec: growth_scale < 1");
    if (s.date_tag.empty()) ThrowInvalidInput("spec: empty date_tag");
  }
  if (camera.speed_mps <= 0.0 || camera.frame_rate_hz <= 0.0 ||
      camera.standoff_m <= 0.0) {
    ThrowInvalidInput("spec: bad camera path");
  }
  if (embedding_dim < 2 || frame_embedding_dim < 2) {
    ThrowInvalidInput("spec: embedding dims must be >= 2");
  }
}

RigidTransform World::SessionTransform(int from, int to) const {
  return session_frames[to].Compose(session_frames[from].Inverse());
}

World Generate(const OrchardSpec& spec) {
  spec.Validate();
  World world;
  world.spec = spec;
  Rng root(spec.seed);

  for (int t = 0; t < spec.n_trees; ++t) {
    world.tree_centers.push_back(
        {t * spec.row_spacing_m, 0.0, spec.crown_center_height_m});
  }

  // Fruits on tree crowns, kept apart laterally (x/z, the image plane of a
  // sideways pass) so distinct fruits do not collapse into one blob.
  const double mean_diameter =
      0.5 * (spec.fruit_diameter_min_m + spec.fruit_diameter_max_m);
  const double min_sep = spec.min_fruit_separation_factor * mean_diameter;
  int fruit_id = 0;
  for (int t = 0; t < spec.n_trees; ++t) {
    Rng tree_rng = root.Fork(1, t);
    const int target = tree_rng.Int(spec.fruits_per_tree_min,
                                    spec.fruits_per_tree_max);
    std::vector<Eigen::Vector3d> accepted;
    for (int i = 0; i < target; ++i) {
      bool placed = false;
      for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
        const Eigen::Vector3d dir = tree_rng.UnitVector();
        const double r = spec.crown_radius_m * tree_rng.Range(0.55, 0.95);
        const Eigen::Vector3d pos = world.tree_centers[t] + r * dir;
        bool ok = true;
        for (const Eigen::Vector3d& q : accepted) {
          const double dx = pos.x() - q.x();
          const double dz = pos.z() - q.z();
          if (std::hypot(dx, dz) < min_sep) {
            ok = false;
            break;
          }
        }
        if (!ok) continue;
        accepted.push_back(pos);
        WorldFruit fruit;
        fruit.fruit_id = fruit_id++;
        fruit.tree_id = t;
        fruit.base_position = pos;
        fruit.base_diameter = tree_rng.Range(spec.fruit_diameter_min_m,
                                             spec.fruit_diameter_max_m);
        Rng latent_rng = root.Fork(2, fruit.fruit_id);
        Eigen::VectorXd latent(spec.embedding_dim);
        for (int k = 0; k < spec.embedding_dim; ++k) latent[k] = latent_rng.Gauss();
        latent.normalize();
        fruit.latent.resize(spec.embedding_dim);
        for (int k = 0; k < spec.embedding_dim; ++k) {
          fruit.latent[k] = static_cast<float>(latent[k]);
        }
        world.fruits.push_back(std::move(fruit));
        placed = true;
      }
    }
  }

  for (int t = 0; t < spec.n_trees; ++t) {
    Rng blob_rng = root.Fork(3, t);
    for (int b = 0; b < spec.canopy_blobs_per_tree; ++b) {
      CanopyBlob blob;
      blob.tree_id = t;
      const Eigen::Vector3d dir = blob_rng.UnitVector();
      blob.center = world.tree_centers[t] +
                    spec.crown_radius_m * blob_rng.Range(0.3, 1.0) * dir;
      blob.radius = spec.canopy_blob_radius_m * blob_rng.Range(0.7, 1.3);
      world.blobs.push_back(blob);
    }
  }

  const int n_fruits = static_cast<int>(world.fruits.size());
  for (size_t s = 0; s < spec.sessions.size(); ++s) {
    const SessionSpec& session = spec.sessions[s];
    std::vector<SessionFruitState> states(n_fruits);
    for (int f = 0; f < n_fruits; ++f) {
      Rng drift_rng = root.Fork(4, s, f);
      SessionFruitState& state = states[f];
      state.position = world.fruits[f].base_position;
      state.position.z() -=
          spec.growth_sag_m_per_unit_scale * (session.growth_scale - 1.0);
      if (session.position_drift_sigma_m > 0.0) {
        state.position += session.position_drift_sigma_m * drift_rng.Gauss3();
      }
      state.diameter = world.fruits[f].base_diameter * session.growth_scale;
    }
    // Removal: exactly floor(fraction * n) fruits, chosen by seeded shuffle.
    const int n_removed =
        static_cast<int>(std::floor(session.removal_fraction * n_fruits));
    if (n_removed > 0) {
      std::vector<int> ids(n_fruits);
      for (int f = 0; f < n_fruits; ++f) ids[f] = f;
      Rng shuffle_rng = root.Fork(5, s);
      for (int f = n_fruits - 1; f > 0; --f) {
        std::swap(ids[f], ids[shuffle_rng.Int(0, f)]);
      }
      for (int k = 0; k < n_removed; ++k) states[ids[k]].removed = true;
    }
    world.session_states.push_back(std::move(states));
    world.session_frames.push_back(SessionFrame(session));
  }
  return world;
}

RenderedSession RenderSession(const World& world, int session_index) {
  const OrchardSpec& spec = world.spec;
  const SessionSpec& session = spec.sessions[session_index];
  const RigidTransform& frame = world.session_frames[session_index];
  const std::vector<SessionFruitState>& states =
      world.session_states[session_index];
  Rng root = Rng(spec.seed).Fork(100, session_index);

  RenderedSession out;
  SessionMap& map = out.map;
  map.session_id = session.date_tag;
  map.intrinsics = {spec.fx, spec.fy, spec.image_width / 2.0,
                    spec.image_height / 2.0, spec.image_width,
                    spec.image_height};
  map.embeddings = EmbeddingTable(spec.embedding_dim);
  map.frame_embeddings = EmbeddingTable(spec.frame_embedding_dim);

  for (int f = 0; f < static_cast<int>(states.size()); ++f) {
    if (states[f].removed) out.removed_fruits.push_back(f);
  }

  // Lateral pass along the row in the base frame.
  const double lead = 1.0;
  const double row_length = (spec.n_trees - 1) * spec.row_spacing_m;
  const double x_begin = -lead;
  const double x_end = row_length + lead;
  const Eigen::Quaterniond base_rotation = BaseCameraRotation();
  const double dt = 1.0 / spec.camera.frame_rate_hz;

  // Frame-embedding RBF centers along the pass.
  std::vector<double> rbf_centers(spec.frame_embedding_dim);
  for (int k = 0; k < spec.frame_embedding_dim; ++k) {
    rbf_centers[k] = x_begin + (x_end - x_begin) * k /
                                  std::max(1, spec.frame_embedding_dim - 1);
  }
  const double rbf_width =
      1.5 * (x_end - x_begin) / std::max(1, spec.frame_embedding_dim - 1);

  int next_embedding_id = 0;
  int frame_id = 0;
  for (double x = x_begin; x <= x_end + 1e-9;
       x += spec.camera.speed_mps * dt, ++frame_id) {
    const double timestamp = frame_id * dt;
    Pose base_pose;
    base_pose.rotation = base_rotation;
    base_pose.translation = {x, -spec.camera.standoff_m,
                             spec.crown_center_height_m};
    base_pose.frame_id = frame_id;
    base_pose.timestamp = timestamp;

    Pose session_pose;
    session_pose.rotation = frame.rotation * base_rotation;
    session_pose.rotation.normalize();
    session_pose.translation = frame.Apply(base_pose.translation);
    session_pose.frame_id = frame_id;
    session_pose.timestamp = timestamp;
    map.poses.push_back(session_pose);

    // Frame embedding encodes the camera station along the row.
    Rng frame_rng = root.Fork(6, frame_id);
    std::vector<float> frame_embedding(spec.frame_embedding_dim);
    for (int k = 0; k < spec.frame_embedding_dim; ++k) {
      const double rbf =
          std::exp(-0.5 * std::pow((x - rbf_centers[k]) / rbf_width, 2.0));
      frame_embedding[k] =
          static_cast<float>(rbf + 0.005 * frame_rng.Gauss());
    }
    map.frame_embeddings.Append(frame_id, frame_embedding);

    // Project fruit centers and canopy blobs; collect occluder disks.
    struct VisibleFruit {
      int fruit_id;
      Eigen::Vector2d pixel;
      double depth;
      double radius_px;
    };
    std::vector<VisibleFruit> visible;
    std::vector<DiskObstacle> obstacles;

    for (const CanopyBlob& blob : world.blobs) {
      const Eigen::Vector3d cam = base_pose.ToCamera(blob.center);
      if (cam.z() <= 0.1) continue;
      const Eigen::Vector2d px(
          spec.fx * cam.x() / cam.z() + map.intrinsics.cx,
          spec.fy * cam.y() / cam.z() + map.intrinsics.cy);
      obstacles.push_back({px, spec.fx * blob.radius / cam.z(), cam.z()});
    }

    for (const WorldFruit& fruit : world.fruits) {
      const SessionFruitState& state = states[fruit.fruit_id];
      if (state.removed) continue;
      const Eigen::Vector3d cam = base_pose.ToCamera(state.position);
      if (cam.z() <= 0.3) continue;
      const Eigen::Vector2d px(
          spec.fx * cam.x() / cam.z() + map.intrinsics.cx,
          spec.fy * cam.y() / cam.z() + map.intrinsics.cy);
      if (px.x() < 0.0 || px.x() > spec.image_width - 1 || px.y() < 0.0 ||
          px.y() > spec.image_height - 1) {
        continue;
      }
      visible.push_back({fruit.fruit_id, px, cam.z(),
                         spec.fx * 0.5 * state.diameter / cam.z()});
    }

    // Occlusion by nearer fruits and canopy blobs (disk overlap).
    std::vector<char> occluded(visible.size(), 0);
    if (spec.occlusion_factor > 0.0) {
      for (size_t i = 0; i < visible.size(); ++i) {
        for (const DiskObstacle& ob : obstacles) {
          if (ob.depth >= visible[i].depth - 0.05) continue;
          if ((visible[i].pixel - ob.center_px).norm() <
              spec.occlusion_factor * ob.radius_px) {
            occluded[i] = 1;
            break;
          }
        }
        if (occluded[i]) continue;
        for (size_t j = 0; j < visible.size(); ++j) {
          if (j == i || visible[j].depth >= visible[i].depth - 0.05) continue;
          if ((visible[i].pixel - visible[j].pixel).norm() <
              spec.occlusion_factor * visible[j].radius_px) {
            occluded[i] = 1;
            break;
          }
        }
      }
    }

    TimedCloud frame_cloud;
    frame_cloud.frame_id = frame_id;
    frame_cloud.timestamp = timestamp;
    frame_cloud.cloud.frame = CloudFrame::kSensor;
    std::vector<Eigen::Vector3d> world_points;

    Rng lidar_rng = root.Fork(7, frame_id);
    int det_id = 0;
    for (size_t i = 0; i < visible.size(); ++i) {
      if (occluded[i]) continue;
      const VisibleFruit& vf = visible[i];
      const SessionFruitState& state = states[vf.fruit_id];

      SampleSphereBand(state.position, 0.5 * state.diameter,
                       base_pose.translation, spec.lidar_density_pts_m2_at_2m,
                       spec.lidar_noise_sigma_m, lidar_rng, &world_points);

      Rng miss_rng = root.Fork(8, frame_id, vf.fruit_id);
      if (session.miss_detection_rate > 0.0 &&
          miss_rng.Uniform() < session.miss_detection_rate) {
        continue;  // segmentation miss; LiDAR still saw the fruit
      }

      // Mask: rasterized disk of the projected sphere, clipped to bounds.
      std::vector<std::pair<int, int>> pixels;
      const int r0 = std::max(0, static_cast<int>(std::floor(vf.pixel.y() -
                                                             vf.radius_px)));
      const int r1 = std::min(spec.image_height - 1,
                              static_cast<int>(std::ceil(vf.pixel.y() +
                                                         vf.radius_px)));
      for (int r = r0; r <= r1; ++r) {
        for (int c = std::max(0, static_cast<int>(std::floor(
                         vf.pixel.x() - vf.radius_px)));
             c <= std::min(spec.image_width - 1,
                           static_cast<int>(std::ceil(vf.pixel.x() +
                                                      vf.radius_px)));
             ++c) {
          const double du = c - vf.pixel.x();
          const double dv = r - vf.pixel.y();
          if (du * du + dv * dv <= vf.radius_px * vf.radius_px) {
            pixels.emplace_back(r, c);
          }
        }
      }
      if (pixels.empty()) continue;

      Detection det;
      det.det_id = det_id++;
      det.frame_id = frame_id;
      det.mask = Mask::FromPixels(frame_id, pixels);
      det.centroid_px = det.mask.Centroid();
      det.confidence = 0.9;
      det.embedding_id = next_embedding_id++;

      Rng emb_rng = root.Fork(9, frame_id, vf.fruit_id);
      std::vector<float> embedding(spec.embedding_dim);
      const double scale =
          spec.embedding_noise_sigma / std::sqrt(spec.embedding_dim);
      for (int k = 0; k < spec.embedding_dim; ++k) {
        embedding[k] = world.fruits[vf.fruit_id].latent[k] +
                       static_cast<float>(scale * emb_rng.Gauss());
      }
      map.embeddings.Append(det.embedding_id, embedding);
      map.detections.push_back(det);
      out.detection_truth[{frame_id, det.det_id}] = vf.fruit_id;
    }

    // Background foliage, trunks, ground (reduced density).
    const double bg_density =
        spec.background_density_scale * spec.lidar_density_pts_m2_at_2m;
    for (const CanopyBlob& blob : world.blobs) {
      if (std::abs(blob.center.x() - x) > 3.0) continue;
      SampleSphereBand(blob.center, blob.radius, base_pose.translation,
                       bg_density, spec.lidar_noise_sigma_m, lidar_rng,
                       &world_points);
    }
    for (const Eigen::Vector3d& tree : world.tree_centers) {
      if (std::abs(tree.x() - x) > 3.0) continue;
      const double trunk_height = tree.z();
      const double dist = std::hypot(tree.y() + spec.camera.standoff_m,
                                     tree.x() - x);
      const double expected =
          bg_density * 0.12 * trunk_height * (4.0 / (dist * dist));
      const int count = PoissonishCount(expected, lidar_rng);
      for (int p = 0; p < count; ++p) {
        const double angle = lidar_rng.Range(-M_PI / 2.0, M_PI / 2.0);
        world_points.push_back(
            {tree.x() + 0.06 * std::sin(angle),
             tree.y() - 0.06 * std::cos(angle),
             lidar_rng.Range(0.0, trunk_height) +
                 spec.lidar_noise_sigma_m * lidar_rng.Gauss()});
      }
    }
    {
      const double expected = bg_density * 0.5;
      const int count = PoissonishCount(expected, lidar_rng);
      for (int p = 0; p < count; ++p) {
        world_points.push_back({x + lidar_rng.Range(-2.0, 2.0),
                                lidar_rng.Range(-1.0, 1.0),
                                spec.lidar_noise_sigma_m * lidar_rng.Gauss()});
      }
    }

    frame_cloud.cloud.points.reserve(world_points.size());
    for (const Eigen::Vector3d& p : world_points) {
      frame_cloud.cloud.points.push_back(base_pose.ToCamera(p));
    }
    out.clouds.push_back(std::move(frame_cloud));
  }

  // Structure cloud for cross-session registration: ground grid, trunks,
  // canopy blobs, expressed in the session frame.
  Rng reg_rng = root.Fork(10);
  PointCloud reg;
  reg.frame = CloudFrame::kWorld;
  auto push_reg = [&](const Eigen::Vector3d& p) {
    reg.points.push_back(frame.Apply(p + 0.002 * reg_rng.Gauss3()));
  };
  for (double gx = x_begin - 0.5; gx <= x_end + 0.5; gx += 0.07) {
    for (double gy = -1.2; gy <= 1.2; gy += 0.07) {
      push_reg({gx, gy, 0.0});
    }
  }
  for (const Eigen::Vector3d& tree : world.tree_centers) {
    for (double z = 0.1; z < tree.z(); z += 0.04) {
      for (int k = 0; k < 6; ++k) {
        const double angle = 2.0 * M_PI * k / 6.0 + z;
        push_reg({tree.x() + 0.06 * std::cos(angle),
                  tree.y() + 0.06 * std::sin(angle), z});
      }
    }
  }
  for (const CanopyBlob& blob : world.blobs) {
    for (int k = 0; k < 60; ++k) {
      push_reg(blob.center + blob.radius * reg_rng.UnitVector());
    }
  }
  map.registration_cloud = std::move(reg);
  return out;
}

}  // namespace fruit4d
