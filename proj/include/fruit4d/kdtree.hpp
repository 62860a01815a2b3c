#pragma once

#include <optional>
#include <vector>

#include <Eigen/Core>

namespace fruit4d {

// Static 3D kd-tree for nearest-neighbour and k-NN queries.
class KdTree3 {
 public:
  struct Hit {
    int index = -1;
    double dist2 = 0.0;
  };

  KdTree3() = default;
  explicit KdTree3(std::vector<Eigen::Vector3d> points);

  bool Empty() const { return points_.empty(); }
  const std::vector<Eigen::Vector3d>& points() const { return points_; }

  std::optional<Hit> Nearest(const Eigen::Vector3d& query,
                             double max_dist) const;
  // Indices of the k nearest points, nearest first.
  std::vector<int> Knn(const Eigen::Vector3d& query, int k) const;

 private:
  struct Node {
    int point = -1;
    int left = -1;
    int right = -1;
    int axis = 0;
  };

  int Build(std::vector<int>& order, int begin, int end, int depth);
  void SearchNearest(int node, const Eigen::Vector3d& q, Hit* best) const;
  void SearchKnn(int node, const Eigen::Vector3d& q, int k,
                 std::vector<Hit>* heap) const;

  std::vector<Eigen::Vector3d> points_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

}  // namespace fruit4d
