#include "fruit4d/mask.hpp"

#include <algorithm>
#include <limits>
#include <map>

#include "fruit4d/error.hpp"

namespace fruit4d {
namespace {

// Sort, merge overlapping or touching runs, drop empties.
std::vector<MaskRun> Normalize(std::vector<MaskRun> runs) {
  std::erase_if(runs, [](const MaskRun& r) { return r.col_end < r.col_begin; });
  std::sort(runs.begin(), runs.end(), [](const MaskRun& a, const MaskRun& b) {
    return a.row != b.row ? a.row < b.row : a.col_begin < b.col_begin;
  });
  std::vector<MaskRun> out;
  for (const MaskRun& r : runs) {
    if (!out.empty() && out.back().row == r.row &&
        r.col_begin <= out.back().col_end + 1) {
      out.back().col_end = std::max(out.back().col_end, r.col_end);
    } else {
      out.push_back(r);
    }
  }
  return out;
}

using ColSpan = std::pair<int, int>;

std::vector<ColSpan> IntersectSpans(const std::vector<ColSpan>& a,
                                    const std::vector<ColSpan>& b) {
  std::vector<ColSpan> out;
  size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    const int lo = std::max(a[i].first, b[j].first);
    const int hi = std::min(a[i].second, b[j].second);
    if (lo <= hi) out.emplace_back(lo, hi);
    if (a[i].second < b[j].second) {
      ++i;
    } else {
      ++j;
    }
  }
  return out;
}

}  // namespace

Mask::Mask(int frame_id, std::vector<MaskRun> runs)
    : frame_id_(frame_id), runs_(Normalize(std::move(runs))) {}

Mask Mask::FromPixels(int frame_id,
                      const std::vector<std::pair<int, int>>& row_col) {
  std::vector<std::pair<int, int>> px = row_col;
  std::sort(px.begin(), px.end());
  px.erase(std::unique(px.begin(), px.end()), px.end());
  std::vector<MaskRun> runs;
  for (const auto& [row, col] : px) {
    if (!runs.empty() && runs.back().row == row &&
        col == runs.back().col_end + 1) {
      runs.back().col_end = col;
    } else {
      runs.push_back({row, col, col});
    }
  }
  Mask m;
  m.frame_id_ = frame_id;
  m.runs_ = std::move(runs);  // already normalized by construction
  return m;
}

long Mask::Area() const {
  long area = 0;
  for (const MaskRun& r : runs_) area += r.col_end - r.col_begin + 1;
  return area;
}

bool Mask::Contains(int row, int col) const {
  // Runs are sorted by (row, col_begin); binary search on the row.
  auto it = std::lower_bound(
      runs_.begin(), runs_.end(), row,
      [](const MaskRun& r, int row_value) { return r.row < row_value; });
  for (; it != runs_.end() && it->row == row; ++it) {
    if (col >= it->col_begin && col <= it->col_end) return true;
    if (col < it->col_begin) return false;
  }
  return false;
}

PixelBox Mask::BoundingBox() const {
  PixelBox box;
  if (runs_.empty()) return box;
  box.row_min = runs_.front().row;
  box.row_max = runs_.back().row;
  box.col_min = std::numeric_limits<int>::max();
  box.col_max = std::numeric_limits<int>::min();
  for (const MaskRun& r : runs_) {
    box.col_min = std::min(box.col_min, r.col_begin);
    box.col_max = std::max(box.col_max, r.col_end);
  }
  return box;
}

Eigen::Vector2d Mask::Centroid() const {
  double sum_u = 0.0, sum_v = 0.0, n = 0.0;
  for (const MaskRun& r : runs_) {
    const double count = r.col_end - r.col_begin + 1;
    sum_u += 0.5 * (r.col_begin + r.col_end) * count;
    sum_v += static_cast<double>(r.row) * count;
    n += count;
  }
  if (n == 0.0) ThrowInvalidInput("centroid of empty mask");
  return {sum_u / n, sum_v / n};
}

std::vector<std::pair<int, int>> Mask::Pixels() const {
  std::vector<std::pair<int, int>> px;
  px.reserve(static_cast<size_t>(Area()));
  for (const MaskRun& r : runs_) {
    for (int c = r.col_begin; c <= r.col_end; ++c) px.emplace_back(r.row, c);
  }
  return px;
}

Mask Mask::Dilated() const {
  std::vector<MaskRun> out;
  out.reserve(runs_.size() * 3);
  for (const MaskRun& r : runs_) {
    for (int dr = -1; dr <= 1; ++dr) {
      out.push_back({r.row + dr, r.col_begin - 1, r.col_end + 1});
    }
  }
  return Mask(frame_id_, std::move(out));
}

Mask Mask::Eroded() const {
  if (runs_.empty()) return *this;
  // Group spans per row, then a pixel survives iff the 3x3 neighbourhood is
  // covered: intersect the 1-shrunk spans of rows r-1, r, r+1.
  std::map<int, std::vector<ColSpan>> rows;
  for (const MaskRun& r : runs_) {
    rows[r.row].emplace_back(r.col_begin + 1, r.col_end - 1);
  }
  std::vector<MaskRun> out;
  for (const auto& [row, spans] : rows) {
    auto above = rows.find(row - 1);
    auto below = rows.find(row + 1);
    if (above == rows.end() || below == rows.end()) continue;
    std::vector<ColSpan> acc = IntersectSpans(spans, above->second);
    acc = IntersectSpans(acc, below->second);
    for (const ColSpan& s : acc) {
      if (s.first <= s.second) out.push_back({row, s.first, s.second});
    }
  }
  Mask m;
  m.frame_id_ = frame_id_;
  m.runs_ = Normalize(std::move(out));
  return m;
}

Mask Mask::Closed() const { return Dilated().Eroded(); }

Mask Mask::ClippedTo(int width, int height) const {
  std::vector<MaskRun> out;
  for (const MaskRun& r : runs_) {
    if (r.row < 0 || r.row >= height) continue;
    const int b = std::max(r.col_begin, 0);
    const int e = std::min(r.col_end, width - 1);
    if (b <= e) out.push_back({r.row, b, e});
  }
  Mask m;
  m.frame_id_ = frame_id_;
  m.runs_ = Normalize(std::move(out));
  return m;
}

long IntersectionArea(const Mask& a, const Mask& b) {
  const auto& ra = a.runs();
  const auto& rb = b.runs();
  long area = 0;
  size_t i = 0, j = 0;
  while (i < ra.size() && j < rb.size()) {
    if (ra[i].row != rb[j].row) {
      if (ra[i].row < rb[j].row) {
        ++i;
      } else {
        ++j;
      }
      continue;
    }
    const int lo = std::max(ra[i].col_begin, rb[j].col_begin);
    const int hi = std::min(ra[i].col_end, rb[j].col_end);
    if (lo <= hi) area += hi - lo + 1;
    if (ra[i].col_end < rb[j].col_end) {
      ++i;
    } else {
      ++j;
    }
  }
  return area;
}

double MaskIou(const Mask& a, const Mask& b) {
  if (a.Empty() || b.Empty()) ThrowInvalidInput("mask IoU of empty mask");
  const long inter = IntersectionArea(a, b);
  const long uni = a.Area() + b.Area() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace fruit4d
