#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "fruit4d/geometry.hpp"
#include "fruit4d/mask.hpp"

namespace fruit4d {

enum class CloudFrame { kSensor, kWorld };

struct PointCloud {
  std::vector<Eigen::Vector3d> points;
  CloudFrame frame = CloudFrame::kWorld;

  bool Empty() const { return points.empty(); }
  size_t Size() const { return points.size(); }
};

// One segmented fruit instance in one image frame. The embedding_id refers
// to a row of the session's per-detection embedding table.
struct Detection {
  int det_id = 0;
  int frame_id = 0;
  Mask mask;
  double confidence = 1.0;
  int embedding_id = -1;
  Eigen::Vector2d centroid_px = Eigen::Vector2d::Zero();
};

struct TrackObservation {
  int frame_id = 0;
  int det_id = 0;
};

// Sequence of per-frame detections of one fruit within a session, plus the
// accumulated world-frame instance cloud.
struct Track {
  int track_id = 0;
  std::vector<TrackObservation> observations;  // strictly increasing frame_id
  PointCloud instance_cloud;                   // world frame
};

struct PixelObservation {
  int frame_id = 0;
  int det_id = 0;
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
};

struct FruitLandmark {
  int fruit_id = 0;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();  // session world frame
  double diameter = 0.0;                               // meters
  int source_track = -1;
  std::vector<PixelObservation> pixel_obs;
};

// Fixed-dimension float32 embedding rows keyed by integer id. Row storage is
// row-major so the table round-trips bit-exactly through embeddings.f32.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  explicit EmbeddingTable(int dim) : dim_(dim) {}

  int dim() const { return dim_; }
  int rows() const { return dim_ == 0 ? 0 : static_cast<int>(data_.size()) / dim_; }
  bool Has(int id) const { return id_to_row_.count(id) > 0; }

  void Append(int id, const std::vector<float>& row);
  Eigen::Map<const Eigen::VectorXf> Row(int id) const;  // throws if missing

  // Euclidean distance between two rows (possibly from different tables).
  static double Distance(const EmbeddingTable& a, int id_a,
                         const EmbeddingTable& b, int id_b);

  const std::vector<float>& data() const { return data_; }
  const std::map<int, int>& id_to_row() const { return id_to_row_; }
  void SetRaw(int dim, std::vector<float> data, std::map<int, int> id_to_row);

 private:
  int dim_ = 0;
  std::vector<float> data_;
  std::map<int, int> id_to_row_;  // ordered: deterministic iteration
};

// Everything one data-collection pass produces, after neural preprocessing:
// poses, detections, embedding tables, landmarks (once tracked), and the
// structure cloud used for cross-session registration.
struct SessionMap {
  std::string session_id;
  std::vector<Pose> poses;  // sorted by frame_id
  Intrinsics intrinsics;
  std::vector<Detection> detections;
  std::vector<FruitLandmark> landmarks;
  EmbeddingTable embeddings;        // per-detection crop embeddings
  EmbeddingTable frame_embeddings;  // per-image embeddings, keyed by frame_id
  PointCloud registration_cloud;    // world frame

  const Pose* FindPose(int frame_id) const;
  void Validate() const;  // referential integrity; throws Error(kInvalidInput)
};

// A no-match vote in a vote table. Real fruit ids are >= 0.
inline constexpr int kNoMatchVote = -1;

struct VoteEntry {
  int fruit_b = kNoMatchVote;
  int image_b = -1;
  double cost = 0.0;
};

// Cross-session correspondence result: per-view vote multiset M(f_i), the
// resolved matches, the stage-1 reference pairs, and both unmatched sets.
struct TemporalMatchSet {
  std::string session_a;
  std::string session_b;
  std::map<int, std::vector<VoteEntry>> vote_table;
  std::vector<std::pair<int, int>> final_matches;  // injective both ways
  std::vector<std::pair<int, int>> references;
  std::vector<int> unmatched_a;
  std::vector<int> unmatched_b;
  std::vector<std::string> warnings;
};

inline int64_t DetKey(int frame_id, int det_id) {
  return (static_cast<int64_t>(frame_id) << 24) | static_cast<int64_t>(det_id);
}

// Lookup from (frame_id, det_id) to the detection record.
class DetectionIndex {
 public:
  explicit DetectionIndex(const std::vector<Detection>& detections);
  const Detection* Find(int frame_id, int det_id) const;

 private:
  std::map<int64_t, const Detection*> by_key_;
};

}  // namespace fruit4d
