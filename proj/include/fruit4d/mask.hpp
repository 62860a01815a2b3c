#pragma once

#include <utility>
#include <vector>

#include <Eigen/Core>

namespace fruit4d {

// One horizontal run of mask pixels: row `row`, columns
// [col_begin, col_end] inclusive.
struct MaskRun {
  int row = 0;
  int col_begin = 0;
  int col_end = 0;
};

struct PixelBox {
  int row_min = 0;
  int row_max = -1;
  int col_min = 0;
  int col_max = -1;
  bool Empty() const { return row_max < row_min || col_max < col_min; }
};

// Run-length encoded pixel set of one instance mask. Runs are kept sorted
// by (row, col_begin), non-overlapping, and maximal (touching runs merged).
class Mask {
 public:
  Mask() = default;
  Mask(int frame_id, std::vector<MaskRun> runs);

  static Mask FromPixels(int frame_id,
                         const std::vector<std::pair<int, int>>& row_col);

  int frame_id() const { return frame_id_; }
  const std::vector<MaskRun>& runs() const { return runs_; }

  bool Empty() const { return runs_.empty(); }
  long Area() const;
  bool Contains(int row, int col) const;
  PixelBox BoundingBox() const;
  // Mean pixel position as (u, v) = (col, row).
  Eigen::Vector2d Centroid() const;
  std::vector<std::pair<int, int>> Pixels() const;

  // 3x3 square structuring element, radius 1.
  Mask Dilated() const;
  Mask Eroded() const;
  // Dilate-then-erode; fills one-pixel holes left by sparse rasterization.
  Mask Closed() const;

  Mask ClippedTo(int width, int height) const;

 private:
  int frame_id_ = 0;
  std::vector<MaskRun> runs_;
};

long IntersectionArea(const Mask& a, const Mask& b);

// |A ∩ B| / |A ∪ B|. Throws Error(kInvalidInput) if either mask is empty.
double MaskIou(const Mask& a, const Mask& b);

}  // namespace fruit4d
