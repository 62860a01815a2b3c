#include "fruit4d/types.hpp"

#include <algorithm>

#include "fruit4d/error.hpp"

namespace fruit4d {

void EmbeddingTable::Append(int id, const std::vector<float>& row) {
  if (dim_ == 0) dim_ = static_cast<int>(row.size());
  if (static_cast<int>(row.size()) != dim_) {
    ThrowInvalidInput("embedding row dimension mismatch");
  }
  if (id_to_row_.count(id)) ThrowInvalidInput("duplicate embedding id");
  id_to_row_[id] = rows();
  data_.insert(data_.end(), row.begin(), row.end());
}

Eigen::Map<const Eigen::VectorXf> EmbeddingTable::Row(int id) const {
  auto it = id_to_row_.find(id);
  if (it == id_to_row_.end()) ThrowInvalidInput("missing embedding id");
  return {data_.data() + static_cast<size_t>(it->second) * dim_,
          static_cast<Eigen::Index>(dim_)};
}

double EmbeddingTable::Distance(const EmbeddingTable& a, int id_a,
                                const EmbeddingTable& b, int id_b) {
  if (a.dim() != b.dim()) ThrowInvalidInput("embedding dimension mismatch");
  const auto ra = a.Row(id_a);
  const auto rb = b.Row(id_b);
  return static_cast<double>((ra - rb).norm());
}

void EmbeddingTable::SetRaw(int dim, std::vector<float> data,
                            std::map<int, int> id_to_row) {
  if (dim <= 0 && !data.empty()) ThrowInvalidInput("embedding table: bad dim");
  if (dim > 0 && data.size() % static_cast<size_t>(dim) != 0) {
    ThrowInvalidInput("embedding table: data size not a multiple of dim");
  }
  dim_ = dim;
  data_ = std::move(data);
  id_to_row_ = std::move(id_to_row);
  for (const auto& [id, row] : id_to_row_) {
    if (row < 0 || row >= rows()) {
      ThrowInvalidInput("embedding table: row index out of range");
    }
  }
}

const Pose* SessionMap::FindPose(int frame_id) const {
  auto it = std::lower_bound(
      poses.begin(), poses.end(), frame_id,
      [](const Pose& p, int f) { return p.frame_id < f; });
  if (it == poses.end() || it->frame_id != frame_id) return nullptr;
  return &*it;
}

void SessionMap::Validate() const {
  intrinsics.Validate();
  for (const Pose& p : poses) p.Validate();
  for (size_t i = 1; i < poses.size(); ++i) {
    if (poses[i].frame_id <= poses[i - 1].frame_id) {
      ThrowInvalidInput("session: poses not strictly increasing in frame_id");
    }
  }
  for (const Detection& d : detections) {
    if (d.embedding_id >= 0 && !embeddings.Has(d.embedding_id)) {
      ThrowInvalidInput("session: detection embedding_id does not resolve");
    }
    if (FindPose(d.frame_id) == nullptr) {
      ThrowInvalidInput("session: detection frame has no pose");
    }
  }
  for (const FruitLandmark& lm : landmarks) {
    for (const PixelObservation& obs : lm.pixel_obs) {
      if (FindPose(obs.frame_id) == nullptr) {
        ThrowInvalidInput("session: landmark observation frame has no pose");
      }
    }
  }
}

DetectionIndex::DetectionIndex(const std::vector<Detection>& detections) {
  for (const Detection& d : detections) {
    by_key_[DetKey(d.frame_id, d.det_id)] = &d;
  }
}

const Detection* DetectionIndex::Find(int frame_id, int det_id) const {
  auto it = by_key_.find(DetKey(frame_id, det_id));
  return it == by_key_.end() ? nullptr : it->second;
}

}  // namespace fruit4d
