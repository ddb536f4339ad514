#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace tubekit {

/// Error type thrown by all validation failures in the library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Filesystem-level failure (open/read/write/rename), as opposed to malformed
/// or inconsistent content. Lets callers map the two to distinct exit codes.
struct IoError : Error {
  using Error::Error;
};

/// Shape of one clip problem: input resolution, output grid, clip length.
///
/// The detector operates on clips of `clip_len` consecutive frames at
/// `width x height` input pixels. Dense maps live on a grid downsampled by
/// `down_ratio` (so the grid is (width/down_ratio) x (height/down_ratio)).
/// `key_index` is the frame within the clip that anchors a tubelet.
struct GridSpec {
  int clip_len = 7;
  int width = 288;
  int height = 288;
  int down_ratio = 4;
  int num_classes = 1;
  int key_index = 3;

  int grid_w() const { return width / down_ratio; }
  int grid_h() const { return height / down_ratio; }

  /// Validating constructor. key_index < 0 selects the default clip_len / 2.
  static GridSpec make(int clip_len, int width, int height, int down_ratio,
                       int num_classes, int key_index = -1) {
    if (clip_len < 1) throw Error("GridSpec: clip_len must be >= 1");
    if (down_ratio < 1) throw Error("GridSpec: down_ratio must be >= 1");
    if (width < 1 || height < 1) throw Error("GridSpec: width/height must be >= 1");
    if (width % down_ratio != 0 || height % down_ratio != 0)
      throw Error("GridSpec: width and height must be divisible by down_ratio");
    if (num_classes < 1) throw Error("GridSpec: num_classes must be >= 1");
    if (key_index < 0) key_index = clip_len / 2;
    if (key_index >= clip_len)
      throw Error("GridSpec: key_index must lie in [0, clip_len)");
    return GridSpec{clip_len, width, height, down_ratio, num_classes, key_index};
  }
};

/// Integer cell coordinate on the output grid.
struct GridPoint {
  int x = 0;
  int y = 0;
  friend bool operator==(const GridPoint&, const GridPoint&) = default;
};

/// Continuous point (grid units or pixels depending on context).
struct Point2d {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point2d&, const Point2d&) = default;
};

/// Width/height pair (grid units or pixels depending on context).
struct Size2d {
  double w = 0.0;
  double h = 0.0;
  friend bool operator==(const Size2d&, const Size2d&) = default;
};

/// Axis-aligned box with corner coordinates (x1,y1) top-left, (x2,y2)
/// bottom-right, in continuous input-pixel units.
struct BBox {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  double center_x() const { return (x1 + x2) / 2.0; }
  double center_y() const { return (y1 + y2) / 2.0; }

  bool valid() const {
    return std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) &&
           std::isfinite(y2) && x1 <= x2 && y1 <= y2;
  }
  friend bool operator==(const BBox&, const BBox&) = default;
};

/// Intersection-over-union of two boxes. Degenerate pairs (zero union) give 0.
inline double iou(const BBox& a, const BBox& b) {
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return inter / uni;
}

}  // namespace tubekit
