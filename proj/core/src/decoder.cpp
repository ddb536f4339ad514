#include "tubekit/decoder.hpp"

#include <algorithm>
#include <cmath>

namespace tubekit {

DecodeMode decode_mode_from_string(const std::string& s) {
  if (s == "no_movement") return DecodeMode::no_movement;
  if (s == "semi_movement") return DecodeMode::semi_movement;
  if (s == "full_movement") return DecodeMode::full_movement;
  throw Error("unknown decode mode: " + s);
}

std::string to_string(DecodeMode mode) {
  switch (mode) {
    case DecodeMode::no_movement: return "no_movement";
    case DecodeMode::semi_movement: return "semi_movement";
    case DecodeMode::full_movement: return "full_movement";
  }
  throw Error("invalid decode mode value");
}

namespace {

bool peak_before(const Peak& a, const Peak& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.class_id != b.class_id) return a.class_id < b.class_id;
  if (a.y != b.y) return a.y < b.y;
  return a.x < b.x;
}

int round_half_up(double v) { return static_cast<int>(std::floor(v + 0.5)); }

}  // namespace

std::vector<Peak> extract_peaks(const DenseMap& heatmap, int max_peaks) {
  if (max_peaks < 1) throw Error("extract_peaks: max_peaks must be >= 1");
  const int w = heatmap.grid_w();
  const int h = heatmap.grid_h();
  std::vector<Peak> peaks;
  for (int c = 0; c < heatmap.channels(); ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double v = heatmap.at(x, y, c);
        bool is_peak = true;
        for (int dy = -1; dy <= 1 && is_peak; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            if (dx == 0 && dy == 0) continue;
            const int nx = x + dx;
            const int ny = y + dy;
            if (nx < 0 || nx >= w || ny < 0 || ny >= h) continue;
            if (heatmap.at(nx, ny, c) > v) {
              is_peak = false;
              break;
            }
          }
        }
        if (is_peak) peaks.push_back(Peak{x, y, c, v});
      }
    }
  }
  const std::size_t keep = std::min<std::size_t>(peaks.size(),
                                                 static_cast<std::size_t>(max_peaks));
  std::partial_sort(peaks.begin(), peaks.begin() + static_cast<std::ptrdiff_t>(keep),
                    peaks.end(), peak_before);
  peaks.resize(keep);
  return peaks;
}

std::vector<Point2d> read_trajectory(const DenseMap& movement, GridPoint peak,
                                     int clip_len) {
  if (movement.channels() != 2 * clip_len)
    throw Error("read_trajectory: movement map must have 2 * clip_len channels");
  if (!movement.in_grid(peak.x, peak.y))
    throw Error("read_trajectory: peak outside grid");
  std::vector<Point2d> traj;
  traj.reserve(static_cast<std::size_t>(clip_len));
  for (int j = 0; j < clip_len; ++j) {
    traj.push_back(Point2d{peak.x + movement.at(peak.x, peak.y, 2 * j),
                           peak.y + movement.at(peak.x, peak.y, 2 * j + 1)});
  }
  return traj;
}

std::vector<BBox> assemble_boxes(std::span<const DenseMap> sizes,
                                 std::span<const Point2d> trajectory, GridPoint peak,
                                 const GridSpec& spec, DecodeMode mode) {
  if (static_cast<int>(sizes.size()) != spec.clip_len)
    throw Error("assemble_boxes: need one size map per clip frame");
  if (static_cast<int>(trajectory.size()) != spec.clip_len)
    throw Error("assemble_boxes: trajectory length must equal clip_len");
  const int gw = spec.grid_w();
  const int gh = spec.grid_h();
  if (peak.x < 0 || peak.x >= gw || peak.y < 0 || peak.y >= gh)
    throw Error("assemble_boxes: peak outside grid");

  std::vector<BBox> boxes;
  boxes.reserve(static_cast<std::size_t>(spec.clip_len));
  const double r = static_cast<double>(spec.down_ratio);
  for (int j = 0; j < spec.clip_len; ++j) {
    const DenseMap& size_map = sizes[static_cast<std::size_t>(j)];
    if (size_map.channels() != 2)
      throw Error("assemble_boxes: size maps must have 2 channels");

    const Point2d traj = trajectory[static_cast<std::size_t>(j)];
    GridPoint lookup = peak;
    if (mode == DecodeMode::full_movement) {
      // Off-grid trajectory points clamp the size lookup but not the center.
      lookup.x = std::clamp(round_half_up(traj.x), 0, gw - 1);
      lookup.y = std::clamp(round_half_up(traj.y), 0, gh - 1);
    }
    const double bw = size_map.at(lookup.x, lookup.y, 0);
    const double bh = size_map.at(lookup.x, lookup.y, 1);

    const Point2d center = (mode == DecodeMode::no_movement)
                               ? Point2d{static_cast<double>(peak.x),
                                         static_cast<double>(peak.y)}
                               : traj;
    boxes.push_back(BBox{r * (center.x - bw / 2.0), r * (center.y - bh / 2.0),
                         r * (center.x + bw / 2.0), r * (center.y + bh / 2.0)});
  }
  return boxes;
}

std::vector<Tubelet> decode_tubelets(const WindowMaps& maps, const GridSpec& spec,
                                     int max_peaks, DecodeMode mode) {
  if (maps.center.channels() != spec.num_classes)
    throw Error("decode_tubelets: heatmap channel count must equal num_classes");
  if (maps.center.grid_w() != spec.grid_w() || maps.center.grid_h() != spec.grid_h())
    throw Error("decode_tubelets: heatmap shape mismatch");
  const auto peaks = extract_peaks(maps.center, max_peaks);
  std::vector<Tubelet> tubelets;
  tubelets.reserve(peaks.size());
  for (const Peak& p : peaks) {
    const auto traj = read_trajectory(maps.movement, GridPoint{p.x, p.y}, spec.clip_len);
    Tubelet t;
    t.start_frame = maps.start_frame;
    t.class_id = p.class_id;
    t.score = p.score;
    t.boxes = assemble_boxes(maps.sizes, traj, GridPoint{p.x, p.y}, spec, mode);
    tubelets.push_back(std::move(t));
  }
  return tubelets;
}

}  // namespace tubekit
