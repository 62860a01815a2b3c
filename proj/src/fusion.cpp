#include "fruit4d/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <tuple>

#include "fruit4d/error.hpp"

namespace fruit4d {
namespace {

double Median(std::vector<double> values) {
  const size_t n = values.size();
  auto mid = values.begin() + n / 2;
  std::nth_element(values.begin(), mid, values.end());
  if (n % 2 == 1) return *mid;
  const double hi = *mid;
  const double lo = *std::max_element(values.begin(), mid);
  return 0.5 * (lo + hi);
}

const Pose* PoseForFrame(const std::vector<Pose>& poses, int frame_id) {
  auto it = std::lower_bound(poses.begin(), poses.end(), frame_id,
                             [](const Pose& p, int f) { return p.frame_id < f; });
  if (it == poses.end() || it->frame_id != frame_id) return nullptr;
  return &*it;
}

}  // namespace

PointCloud Accumulate(const std::vector<TimedCloud>& clouds,
                      const std::vector<Pose>& poses, double t,
                      double window_s) {
  const double half = 0.5 * window_s;
  PointCloud out;
  out.frame = CloudFrame::kWorld;
  bool any = false;
  for (const TimedCloud& tc : clouds) {
    if (tc.timestamp < t - half || tc.timestamp > t + half) continue;
    any = true;
    if (tc.cloud.frame == CloudFrame::kWorld) {
      out.points.insert(out.points.end(), tc.cloud.points.begin(),
                        tc.cloud.points.end());
    } else {
      const Pose* pose = PoseForFrame(poses, tc.frame_id);
      if (pose == nullptr) {
        ThrowInvalidInput("accumulate: no pose for sensor-frame cloud at frame " +
                          std::to_string(tc.frame_id));
      }
      for (const Eigen::Vector3d& p : tc.cloud.points) {
        out.points.push_back(pose->ToWorld(p));
      }
    }
  }
  if (!any) {
    throw Error(ErrorCode::kEmptyWindow,
                "accumulate: no cloud within window around t=" + std::to_string(t));
  }
  return out;
}

PointCloud DepthBandFilter(const std::vector<Eigen::Vector3d>& points,
                           const std::vector<double>& depths,
                           const FusionParams& params) {
  const double median = Median(depths);
  std::vector<double> deviations(depths.size());
  for (size_t i = 0; i < depths.size(); ++i) {
    deviations[i] = std::abs(depths[i] - median);
  }
  const double mad = Median(deviations);
  const double band = params.depth_band_mad_scale * mad + 1e-9;

  PointCloud out;
  out.frame = CloudFrame::kWorld;
  for (size_t i = 0; i < points.size(); ++i) {
    if (std::abs(depths[i] - median) <= band) out.points.push_back(points[i]);
  }
  return out;
}

std::optional<PointCloud> ExtractInstanceCloud(const PointCloud& accumulated,
                                               const Detection& det,
                                               const Pose& pose,
                                               const Intrinsics& k,
                                               const FusionParams& params) {
  if (accumulated.Empty()) ThrowInvalidInput("extract: empty accumulated cloud");

  std::vector<Eigen::Vector3d> inside;
  std::vector<double> depths;
  for (const Eigen::Vector3d& p : accumulated.points) {
    const Eigen::Vector3d cam = pose.ToCamera(p);
    if (cam.z() <= 0.0) continue;
    const double u = k.fx * cam.x() / cam.z() + k.cx;
    const double v = k.fy * cam.y() / cam.z() + k.cy;
    const int col = static_cast<int>(std::lround(u));
    const int row = static_cast<int>(std::lround(v));
    if (!det.mask.Contains(row, col)) continue;
    inside.push_back(p);
    depths.push_back(cam.z());
  }
  if (static_cast<int>(inside.size()) < params.min_points) return std::nullopt;
  return DepthBandFilter(inside, depths, params);
}

std::vector<std::optional<PointCloud>> ExtractInstanceClouds(
    const PointCloud& accumulated, const std::vector<Detection>& detections,
    const Pose& pose, const Intrinsics& k, const FusionParams& params) {
  std::vector<std::optional<PointCloud>> out(detections.size());
  if (detections.empty()) return out;
  if (accumulated.Empty()) ThrowInvalidInput("extract: empty accumulated cloud");

  // Row -> (column span, detection) interval index over all masks, so the
  // accumulated cloud is projected exactly once.
  struct Span {
    int col_begin;
    int col_end;
    int det;
  };
  std::map<int, std::vector<Span>> spans_by_row;
  for (size_t d = 0; d < detections.size(); ++d) {
    for (const MaskRun& run : detections[d].mask.runs()) {
      spans_by_row[run.row].push_back(
          {run.col_begin, run.col_end, static_cast<int>(d)});
    }
  }

  std::vector<std::vector<Eigen::Vector3d>> inside(detections.size());
  std::vector<std::vector<double>> depths(detections.size());
  for (const Eigen::Vector3d& p : accumulated.points) {
    const Eigen::Vector3d cam = pose.ToCamera(p);
    if (cam.z() <= 0.0) continue;
    const double u = k.fx * cam.x() / cam.z() + k.cx;
    const double v = k.fy * cam.y() / cam.z() + k.cy;
    const int col = static_cast<int>(std::lround(u));
    const int row = static_cast<int>(std::lround(v));
    const auto it = spans_by_row.find(row);
    if (it == spans_by_row.end()) continue;
    for (const Span& span : it->second) {
      if (col >= span.col_begin && col <= span.col_end) {
        inside[span.det].push_back(p);
        depths[span.det].push_back(cam.z());
      }
    }
  }
  for (size_t d = 0; d < detections.size(); ++d) {
    if (static_cast<int>(inside[d].size()) < params.min_points) continue;
    out[d] = DepthBandFilter(inside[d], depths[d], params);
  }
  return out;
}

Eigen::Vector3d Centroid(const PointCloud& cloud) {
  if (cloud.Empty()) ThrowInvalidInput("centroid: empty cloud");
  Eigen::Vector3d sum = Eigen::Vector3d::Zero();
  for (const Eigen::Vector3d& p : cloud.points) sum += p;
  return sum / static_cast<double>(cloud.points.size());
}

PointCloud VoxelDownsample(const PointCloud& cloud, double voxel_m) {
  struct Cell {
    Eigen::Vector3d sum = Eigen::Vector3d::Zero();
    int count = 0;
  };
  std::map<std::tuple<long, long, long>, Cell> cells;
  for (const Eigen::Vector3d& p : cloud.points) {
    const auto key = std::make_tuple(static_cast<long>(std::floor(p.x() / voxel_m)),
                                     static_cast<long>(std::floor(p.y() / voxel_m)),
                                     static_cast<long>(std::floor(p.z() / voxel_m)));
    Cell& c = cells[key];
    c.sum += p;
    c.count += 1;
  }
  PointCloud out;
  out.frame = cloud.frame;
  out.points.reserve(cells.size());
  for (const auto& [key, cell] : cells) {
    out.points.push_back(cell.sum / cell.count);
  }
  return out;
}

double EstimateDiameter(const PointCloud& cloud, const FusionParams& params) {
  const int n = static_cast<int>(cloud.points.size());
  if (n < params.min_points) {
    ThrowInvalidInput("diameter: fewer than min_points points");
  }
  const Eigen::Vector3d c = Centroid(cloud);

  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::vector<double> dist2(n);
  for (int i = 0; i < n; ++i) dist2[i] = (cloud.points[i] - c).squaredNorm();
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return dist2[a] < dist2[b]; });

  const int keep = n - static_cast<int>(std::floor(params.trim_fraction * n));
  Eigen::Vector3d lo = Eigen::Vector3d::Constant(
      std::numeric_limits<double>::infinity());
  Eigen::Vector3d hi = -lo;
  for (int i = 0; i < keep; ++i) {
    const Eigen::Vector3d& p = cloud.points[order[i]];
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  return (hi - lo).sum() / 3.0;
}

}  // namespace fruit4d
