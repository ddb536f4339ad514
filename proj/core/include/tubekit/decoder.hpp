#pragma once

#include <span>
#include <string>
#include <vector>

#include "tubekit/dense_map.hpp"
#include "tubekit/geometry.hpp"
#include "tubekit/types.hpp"

namespace tubekit {

/// Ablation modes for box assembly:
///  - full_movement: per-frame sizes read at the trajectory point, boxes
///    centered on the trajectory.
///  - semi_movement: sizes read at the key-frame peak cell for every frame,
///    boxes still centered on the trajectory.
///  - no_movement: sizes read at the key-frame peak cell, boxes centered on
///    the key-frame peak for every frame.
/// full and semi therefore always produce identical box centers.
enum class DecodeMode { no_movement, semi_movement, full_movement };

DecodeMode decode_mode_from_string(const std::string& s);
std::string to_string(DecodeMode mode);

/// One local maximum of the center heatmap.
struct Peak {
  int x = 0;
  int y = 0;
  int class_id = 0;
  double score = 0.0;
};

/// Dense prediction maps for one clip window.
struct WindowMaps {
  int start_frame = 0;
  DenseMap center;              // (grid_h, grid_w, num_classes)
  DenseMap movement;            // (grid_h, grid_w, 2 * clip_len)
  std::vector<DenseMap> sizes;  // clip_len maps of (grid_h, grid_w, 2)
};

/// All cells that are >= each of their existing 8-connected neighbors, per
/// class independently, ordered by score descending with ties broken by
/// ascending (class_id, y, x), truncated to max_peaks.
std::vector<Peak> extract_peaks(const DenseMap& heatmap, int max_peaks);

/// Per-frame trajectory of a peak in continuous grid units: the peak cell
/// plus the movement channels (dx_j, dy_j) read at the peak cell.
std::vector<Point2d> read_trajectory(const DenseMap& movement, GridPoint peak,
                                     int clip_len);

/// Boxes in input pixels for one peak. Size lookups round the lookup point
/// half-up per axis and clamp it to the grid; box centers are never clamped.
std::vector<BBox> assemble_boxes(std::span<const DenseMap> sizes,
                                 std::span<const Point2d> trajectory, GridPoint peak,
                                 const GridSpec& spec, DecodeMode mode);

/// Full decode of one window: top max_peaks tubelets in peak order.
std::vector<Tubelet> decode_tubelets(const WindowMaps& maps, const GridSpec& spec,
                                     int max_peaks, DecodeMode mode);

}  // namespace tubekit
