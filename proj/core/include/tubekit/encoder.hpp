#pragma once

#include <span>
#include <string>
#include <vector>

#include "tubekit/dense_map.hpp"
#include "tubekit/geometry.hpp"
#include "tubekit/types.hpp"

namespace tubekit {

/// Movement supervision for one instance in one clip window: the anchor cell
/// (quantized key-frame center) plus 2*clip_len deltas, laid out
/// (dx_0, dy_0, dx_1, dy_1, ...), in grid units. Deltas are measured from the
/// unrounded per-frame centers to the integer anchor, so the entry at the key
/// frame carries the sub-cell quantization residual.
struct MovementTarget {
  GridPoint anchor;
  std::vector<double> deltas;
};

/// Box-size supervision for one instance in one clip window: for each frame,
/// the grid cell holding the (w, h) regression target, and that target in
/// grid units.
struct SizeTarget {
  std::vector<GridPoint> cells;
  std::vector<Size2d> sizes;
};

/// All supervision for one clip window. `instance_ids` are indices into the
/// instance list passed to encode_clip, aligned with movement/sizes entries.
/// Instances not fully covering the window are skipped, with a warning.
struct ClipTargets {
  int start_frame = 0;
  DenseMap center_heatmap;  // (grid_h, grid_w, num_classes), values in [0, 1]
  std::vector<MovementTarget> movement;
  std::vector<SizeTarget> sizes;
  std::vector<int> instance_ids;
  std::vector<std::string> warnings;

  int count() const { return static_cast<int>(instance_ids.size()); }
};

/// Keypoint radius for a w x h box (grid units): the largest center shift
/// keeping IoU >= min_overlap with the unshifted box, following the standard
/// corner-keypoint rule (minimum over its three shift configurations).
double gaussian_radius(double w, double h, double min_overlap);

/// Heatmap spread for a w x h box (grid units):
/// max(max(radius, 0) / 3, 2/3). The 2/3 floor keeps degenerate boxes usable.
double gaussian_sigma(double w, double h, double min_overlap = 0.7);

/// Quantized key-frame center of an instance for the window starting at
/// window_start: floor the pixel center, divide by down_ratio, floor again.
/// The result may lie outside the grid for out-of-frame boxes; callers clamp.
/// Throws if the instance does not cover the key frame.
GridPoint key_center(const Instance& inst, int window_start, const GridSpec& spec);

/// Grid cell a box's size target lands in: per-axis round-half-up of
/// center / down_ratio, clamped to the grid. The decoder reads sizes from the
/// same cell when looking up a trajectory point.
GridPoint size_cell(const BBox& box, const GridSpec& spec);

/// Splat max(existing, gaussian) for one center onto one class channel.
/// The gaussian is exp(-((x-cx)^2+(y-cy)^2) / (2 sigma^2)), evaluated on every
/// cell; the value at (cx, cy) is exactly 1.
void add_gaussian(DenseMap& heatmap, int channel, int cx, int cy, double sigma);

/// Per-class center heatmap for one window. Every instance must cover the
/// window. Out-of-grid anchors are clamped (recorded in *warnings if given).
DenseMap encode_center_heatmap(std::span<const Instance> instances, int window_start,
                               const GridSpec& spec, double min_overlap = 0.7,
                               std::vector<std::string>* warnings = nullptr);

/// Movement target for one instance (must cover the window).
MovementTarget encode_movement(const Instance& inst, int window_start,
                               const GridSpec& spec,
                               std::vector<std::string>* warnings = nullptr);

/// Box-size target for one instance (must cover the window). Cells are the
/// per-frame centers in grid units rounded half-up per axis, clamped to the
/// grid (recorded in *warnings if given); this matches the cell the decoder
/// reads sizes from at the true trajectory point.
SizeTarget encode_boxsize(const Instance& inst, int window_start, const GridSpec& spec,
                          std::vector<std::string>* warnings = nullptr);

/// Encode all three branches for one window, skipping (with a warning) any
/// instance that does not cover every frame of the window.
ClipTargets encode_clip(std::span<const Instance> instances, int window_start,
                        const GridSpec& spec, double min_overlap = 0.7);

}  // namespace tubekit
