#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "tubekit/geometry.hpp"

namespace tubekit {

/// Dense per-cell tensor on the output grid, shape (grid_h, grid_w, channels),
/// row-major with channels fastest: index(x, y, c) = (y * grid_w + x) * channels + c.
///
/// Values are held in double precision in memory; the on-disk container stores
/// 32-bit floats (see tensor_io.hpp).
class DenseMap {
 public:
  DenseMap() = default;
  DenseMap(int grid_h, int grid_w, int channels, double fill = 0.0)
      : h_(grid_h), w_(grid_w), c_(channels) {
    if (grid_h < 1 || grid_w < 1 || channels < 1)
      throw Error("DenseMap: all dims must be >= 1");
    data_.assign(static_cast<std::size_t>(h_) * w_ * c_, fill);
  }

  int grid_h() const { return h_; }
  int grid_w() const { return w_; }
  int channels() const { return c_; }

  bool same_shape(const DenseMap& o) const {
    return h_ == o.h_ && w_ == o.w_ && c_ == o.c_;
  }

  std::size_t size() const { return data_.size(); }

  std::size_t index(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * w_ + x) * c_ + c;
  }

  double at(int x, int y, int c) const { return data_[index(x, y, c)]; }
  double& at(int x, int y, int c) { return data_[index(x, y, c)]; }

  /// Bounds-checked access for callers handling untrusted coordinates.
  double at_checked(int x, int y, int c) const {
    check(x, y, c);
    return at(x, y, c);
  }
  double& at_checked(int x, int y, int c) {
    check(x, y, c);
    return at(x, y, c);
  }

  bool in_grid(int x, int y) const {
    return x >= 0 && x < w_ && y >= 0 && y < h_;
  }

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  friend bool operator==(const DenseMap&, const DenseMap&) = default;

 private:
  void check(int x, int y, int c) const {
    if (x < 0 || x >= w_ || y < 0 || y >= h_ || c < 0 || c >= c_)
      throw Error("DenseMap: index out of range");
  }

  int h_ = 0, w_ = 0, c_ = 0;
  std::vector<double> data_;
};

}  // namespace tubekit
