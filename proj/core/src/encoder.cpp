#include "tubekit/encoder.hpp"

#include <algorithm>
#include <cmath>

namespace tubekit {

namespace {

int round_half_up(double v) { return static_cast<int>(std::floor(v + 0.5)); }

int clamp_warn(int v, int lo, int hi, const char* what, int instance_id,
               std::vector<std::string>* warnings) {
  if (v >= lo && v <= hi) return v;
  const int c = std::clamp(v, lo, hi);
  if (warnings)
    warnings->push_back(std::string(what) + " for instance " +
                        std::to_string(instance_id) + " outside grid (" +
                        std::to_string(v) + "), clamped to " + std::to_string(c));
  return c;
}

}  // namespace

double gaussian_radius(double w, double h, double min_overlap) {
  if (!(min_overlap > 0.0) || !(min_overlap < 1.0))
    throw Error("gaussian_radius: min_overlap must be in (0, 1)");
  if (w < 0.0 || h < 0.0) throw Error("gaussian_radius: negative box size");
  const double o = min_overlap;

  // Both corners shift diagonally by r in opposite directions.
  const double b1 = h + w;
  const double c1 = w * h * (1.0 - o) / (1.0 + o);
  const double r1 = (b1 - std::sqrt(b1 * b1 - 4.0 * c1)) / 2.0;

  // The shifted box shrinks on both sides.
  const double a2 = 4.0;
  const double b2 = 2.0 * (h + w);
  const double c2 = (1.0 - o) * w * h;
  const double r2 = (b2 - std::sqrt(b2 * b2 - 4.0 * a2 * c2)) / (2.0 * a2);

  // The shifted box grows on both sides.
  const double a3 = 4.0 * o;
  const double b3 = -2.0 * o * (h + w);
  const double c3 = (o - 1.0) * w * h;
  const double r3 = (b3 + std::sqrt(b3 * b3 - 4.0 * a3 * c3)) / (2.0 * a3);

  return std::min({r1, r2, r3});
}

double gaussian_sigma(double w, double h, double min_overlap) {
  const double r = std::max(gaussian_radius(w, h, min_overlap), 0.0);
  return std::max(r / 3.0, 2.0 / 3.0);
}

GridPoint size_cell(const BBox& box, const GridSpec& spec) {
  GridPoint cell{round_half_up(box.center_x() / spec.down_ratio),
                 round_half_up(box.center_y() / spec.down_ratio)};
  cell.x = std::clamp(cell.x, 0, spec.grid_w() - 1);
  cell.y = std::clamp(cell.y, 0, spec.grid_h() - 1);
  return cell;
}

GridPoint key_center(const Instance& inst, int window_start, const GridSpec& spec) {
  const int key_frame = window_start + spec.key_index;
  if (!inst.covers_frame(key_frame))
    throw Error("key_center: instance does not cover the key frame");
  const BBox& b = inst.box_at(key_frame);
  const int px = static_cast<int>(std::floor(b.center_x()));
  const int py = static_cast<int>(std::floor(b.center_y()));
  const auto to_grid = [&](int p) {
    return static_cast<int>(std::floor(static_cast<double>(p) / spec.down_ratio));
  };
  return GridPoint{to_grid(px), to_grid(py)};
}

void add_gaussian(DenseMap& heatmap, int channel, int cx, int cy, double sigma) {
  if (channel < 0 || channel >= heatmap.channels())
    throw Error("add_gaussian: channel out of range");
  if (!(sigma > 0.0)) throw Error("add_gaussian: sigma must be positive");
  const double denom = 2.0 * sigma * sigma;
  for (int y = 0; y < heatmap.grid_h(); ++y) {
    for (int x = 0; x < heatmap.grid_w(); ++x) {
      const double dx = x - cx;
      const double dy = y - cy;
      const double v = std::exp(-(dx * dx + dy * dy) / denom);
      double& cell = heatmap.at(x, y, channel);
      cell = std::max(cell, v);
    }
  }
}

DenseMap encode_center_heatmap(std::span<const Instance> instances, int window_start,
                               const GridSpec& spec, double min_overlap,
                               std::vector<std::string>* warnings) {
  DenseMap heatmap(spec.grid_h(), spec.grid_w(), spec.num_classes, 0.0);
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const Instance& inst = instances[i];
    if (!inst.covers_window(window_start, spec.clip_len))
      throw Error("encode_center_heatmap: instance does not cover the window");
    if (inst.class_id < 0 || inst.class_id >= spec.num_classes)
      throw Error("encode_center_heatmap: class_id out of range");
    const GridPoint raw = key_center(inst, window_start, spec);
    const int cx = clamp_warn(raw.x, 0, spec.grid_w() - 1, "key center x",
                              static_cast<int>(i), warnings);
    const int cy = clamp_warn(raw.y, 0, spec.grid_h() - 1, "key center y",
                              static_cast<int>(i), warnings);
    const BBox& kb = inst.box_at(window_start + spec.key_index);
    const double sigma = gaussian_sigma(kb.width() / spec.down_ratio,
                                        kb.height() / spec.down_ratio, min_overlap);
    add_gaussian(heatmap, inst.class_id, cx, cy, sigma);
  }
  return heatmap;
}

MovementTarget encode_movement(const Instance& inst, int window_start,
                               const GridSpec& spec,
                               std::vector<std::string>* warnings) {
  if (!inst.covers_window(window_start, spec.clip_len))
    throw Error("encode_movement: instance does not cover the window");
  const GridPoint raw = key_center(inst, window_start, spec);
  MovementTarget t;
  t.anchor.x = clamp_warn(raw.x, 0, spec.grid_w() - 1, "movement anchor x", -1, warnings);
  t.anchor.y = clamp_warn(raw.y, 0, spec.grid_h() - 1, "movement anchor y", -1, warnings);
  t.deltas.reserve(static_cast<std::size_t>(2 * spec.clip_len));
  for (int j = 0; j < spec.clip_len; ++j) {
    const BBox& b = inst.box_at(window_start + j);
    t.deltas.push_back(b.center_x() / spec.down_ratio - t.anchor.x);
    t.deltas.push_back(b.center_y() / spec.down_ratio - t.anchor.y);
  }
  return t;
}

SizeTarget encode_boxsize(const Instance& inst, int window_start, const GridSpec& spec,
                          std::vector<std::string>* warnings) {
  if (!inst.covers_window(window_start, spec.clip_len))
    throw Error("encode_boxsize: instance does not cover the window");
  SizeTarget t;
  t.cells.reserve(static_cast<std::size_t>(spec.clip_len));
  t.sizes.reserve(static_cast<std::size_t>(spec.clip_len));
  for (int j = 0; j < spec.clip_len; ++j) {
    const BBox& b = inst.box_at(window_start + j);
    const GridPoint raw{round_half_up(b.center_x() / spec.down_ratio),
                        round_half_up(b.center_y() / spec.down_ratio)};
    GridPoint cell;
    cell.x = clamp_warn(raw.x, 0, spec.grid_w() - 1, "size cell x", -1, warnings);
    cell.y = clamp_warn(raw.y, 0, spec.grid_h() - 1, "size cell y", -1, warnings);
    t.cells.push_back(cell);
    t.sizes.push_back(Size2d{b.width() / spec.down_ratio, b.height() / spec.down_ratio});
  }
  return t;
}

ClipTargets encode_clip(std::span<const Instance> instances, int window_start,
                        const GridSpec& spec, double min_overlap) {
  ClipTargets out;
  out.start_frame = window_start;
  std::vector<Instance> covering;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    if (!instances[i].covers_window(window_start, spec.clip_len)) {
      out.warnings.push_back("instance " + std::to_string(i) +
                             " does not cover window starting at " +
                             std::to_string(window_start) + "; skipped");
      continue;
    }
    covering.push_back(instances[i]);
    out.instance_ids.push_back(static_cast<int>(i));
  }
  out.center_heatmap = encode_center_heatmap(covering, window_start, spec, min_overlap,
                                             &out.warnings);
  for (const Instance& inst : covering) {
    out.movement.push_back(encode_movement(inst, window_start, spec, &out.warnings));
    out.sizes.push_back(encode_boxsize(inst, window_start, spec, &out.warnings));
  }
  return out;
}

}  // namespace tubekit
