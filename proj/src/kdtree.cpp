#include "fruit4d/kdtree.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace fruit4d {

KdTree3::KdTree3(std::vector<Eigen::Vector3d> points)
    : points_(std::move(points)) {
  if (points_.empty()) return;
  std::vector<int> order(points_.size());
  std::iota(order.begin(), order.end(), 0);
  nodes_.reserve(points_.size());
  root_ = Build(order, 0, static_cast<int>(order.size()), 0);
}

int KdTree3::Build(std::vector<int>& order, int begin, int end, int depth) {
  if (begin >= end) return -1;
  const int axis = depth % 3;
  const int mid = begin + (end - begin) / 2;
  std::nth_element(order.begin() + begin, order.begin() + mid,
                   order.begin() + end, [&](int a, int b) {
                     return points_[a][axis] < points_[b][axis];
                   });
  const int node_index = static_cast<int>(nodes_.size());
  nodes_.push_back({order[mid], -1, -1, axis});
  const int left = Build(order, begin, mid, depth + 1);
  const int right = Build(order, mid + 1, end, depth + 1);
  nodes_[node_index].left = left;
  nodes_[node_index].right = right;
  return node_index;
}

void KdTree3::SearchNearest(int node, const Eigen::Vector3d& q,
                            Hit* best) const {
  if (node < 0) return;
  const Node& n = nodes_[node];
  const Eigen::Vector3d& p = points_[n.point];
  const double d2 = (p - q).squaredNorm();
  if (d2 < best->dist2 || (d2 == best->dist2 && n.point < best->index)) {
    best->index = n.point;
    best->dist2 = d2;
  }
  const double delta = q[n.axis] - p[n.axis];
  const int near = delta <= 0.0 ? n.left : n.right;
  const int far = delta <= 0.0 ? n.right : n.left;
  SearchNearest(near, q, best);
  if (delta * delta <= best->dist2) SearchNearest(far, q, best);
}

std::optional<KdTree3::Hit> KdTree3::Nearest(const Eigen::Vector3d& query,
                                             double max_dist) const {
  if (Empty()) return std::nullopt;
  Hit best;
  best.dist2 = max_dist * max_dist;
  best.index = std::numeric_limits<int>::max();
  SearchNearest(root_, query, &best);
  if (best.index == std::numeric_limits<int>::max()) return std::nullopt;
  return best;
}

void KdTree3::SearchKnn(int node, const Eigen::Vector3d& q, int k,
                        std::vector<Hit>* heap) const {
  if (node < 0) return;
  const Node& n = nodes_[node];
  const Eigen::Vector3d& p = points_[n.point];
  const double d2 = (p - q).squaredNorm();
  auto worse = [](const Hit& a, const Hit& b) {
    return a.dist2 != b.dist2 ? a.dist2 < b.dist2 : a.index < b.index;
  };
  if (static_cast<int>(heap->size()) < k) {
    heap->push_back({n.point, d2});
    std::push_heap(heap->begin(), heap->end(), worse);
  } else if (d2 < heap->front().dist2) {
    std::pop_heap(heap->begin(), heap->end(), worse);
    heap->back() = {n.point, d2};
    std::push_heap(heap->begin(), heap->end(), worse);
  }
  const double delta = q[n.axis] - p[n.axis];
  const int near = delta <= 0.0 ? n.left : n.right;
  const int far = delta <= 0.0 ? n.right : n.left;
  SearchKnn(near, q, k, heap);
  if (static_cast<int>(heap->size()) < k ||
      delta * delta <= heap->front().dist2) {
    SearchKnn(far, q, k, heap);
  }
}

std::vector<int> KdTree3::Knn(const Eigen::Vector3d& query, int k) const {
  std::vector<Hit> heap;
  if (k <= 0 || Empty()) return {};
  heap.reserve(k);
  SearchKnn(root_, query, k, &heap);
  std::sort(heap.begin(), heap.end(), [](const Hit& a, const Hit& b) {
    return a.dist2 != b.dist2 ? a.dist2 < b.dist2 : a.index < b.index;
  });
  std::vector<int> out;
  out.reserve(heap.size());
  for (const Hit& h : heap) out.push_back(h.index);
  return out;
}

}  // namespace fruit4d
