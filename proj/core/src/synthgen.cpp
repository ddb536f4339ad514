#include "tubekit/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "tubekit/encoder.hpp"
#include "tubekit/rng.hpp"

namespace tubekit {

namespace {

constexpr int kPlacementTries = 2048;

// Displacement of an instance's center relative to its frame-0 position.
struct MotionCurve {
  MotionModel model = MotionModel::static_box;
  double vx = 0.0, vy = 0.0;                  // linear: pixels / frame
  double ax = 0.0, ay = 0.0;                  // sinusoidal: amplitude, pixels
  double wx = 0.0, wy = 0.0;                  // sinusoidal: angular frequency
  double phx = 0.0, phy = 0.0;                // sinusoidal: phase

  double dx(double t) const {
    switch (model) {
      case MotionModel::static_box: return 0.0;
      case MotionModel::linear: return vx * t;
      case MotionModel::sinusoidal: return ax * (std::sin(wx * t + phx) - std::sin(phx));
    }
    return 0.0;
  }
  double dy(double t) const {
    switch (model) {
      case MotionModel::static_box: return 0.0;
      case MotionModel::linear: return vy * t;
      case MotionModel::sinusoidal: return ay * (std::sin(wy * t + phy) - std::sin(phy));
    }
    return 0.0;
  }
  // Bounds on |dx|, |dy| over t in [0, len).
  double bound_x(int len) const {
    if (model == MotionModel::linear) return std::abs(vx) * (len - 1);
    if (model == MotionModel::sinusoidal) return 2.0 * std::abs(ax);
    return 0.0;
  }
  double bound_y(int len) const {
    if (model == MotionModel::linear) return std::abs(vy) * (len - 1);
    if (model == MotionModel::sinusoidal) return 2.0 * std::abs(ay);
    return 0.0;
  }
  void scale(double s) {
    vx *= s;
    vy *= s;
    ax *= s;
    ay *= s;
  }
};

void validate(const SceneSpec& s) {
  if (s.num_instances < 0) throw Error("scene: num_instances must be >= 0");
  if (s.video_len < 1) throw Error("scene: video_len must be >= 1");
  if (s.width < 1 || s.height < 1) throw Error("scene: frame size must be positive");
  if (s.num_classes < 1) throw Error("scene: num_classes must be >= 1");
  if (!(s.box_min > 0.0) || s.box_max < s.box_min)
    throw Error("scene: need 0 < box_min <= box_max");
  if (s.speed_min < 0.0 || s.speed_max < s.speed_min)
    throw Error("scene: need 0 <= speed_min <= speed_max");
  if (s.amplitude_min < 0.0 || s.amplitude_max < s.amplitude_min)
    throw Error("scene: need 0 <= amplitude_min <= amplitude_max");
  if (!(s.period_min > 0.0) || s.period_max < s.period_min)
    throw Error("scene: need 0 < period_min <= period_max");
  if (s.min_separation < 0.0) throw Error("scene: min_separation must be >= 0");
}

}  // namespace

MotionModel motion_from_string(const std::string& s) {
  if (s == "static") return MotionModel::static_box;
  if (s == "linear") return MotionModel::linear;
  if (s == "sinusoidal") return MotionModel::sinusoidal;
  throw Error("unknown motion model '" + s + "' (static, linear, sinusoidal)");
}

std::string to_string(MotionModel m) {
  switch (m) {
    case MotionModel::static_box: return "static";
    case MotionModel::linear: return "linear";
    case MotionModel::sinusoidal: return "sinusoidal";
  }
  throw Error("invalid motion model value");
}

SceneSpec scene_spec_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("scene spec: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error("scene spec: top level must be an object");
  SceneSpec s;
  try {
    if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("num_instances")) s.num_instances = j.at("num_instances").get<int>();
    if (j.contains("motion")) s.motion = motion_from_string(j.at("motion").get<std::string>());
    if (j.contains("video_len")) s.video_len = j.at("video_len").get<int>();
    if (j.contains("width")) s.width = j.at("width").get<int>();
    if (j.contains("height")) s.height = j.at("height").get<int>();
    if (j.contains("num_classes")) s.num_classes = j.at("num_classes").get<int>();
    if (j.contains("box_min")) s.box_min = j.at("box_min").get<double>();
    if (j.contains("box_max")) s.box_max = j.at("box_max").get<double>();
    if (j.contains("speed_min")) s.speed_min = j.at("speed_min").get<double>();
    if (j.contains("speed_max")) s.speed_max = j.at("speed_max").get<double>();
    if (j.contains("amplitude_min")) s.amplitude_min = j.at("amplitude_min").get<double>();
    if (j.contains("amplitude_max")) s.amplitude_max = j.at("amplitude_max").get<double>();
    if (j.contains("period_min")) s.period_min = j.at("period_min").get<double>();
    if (j.contains("period_max")) s.period_max = j.at("period_max").get<double>();
    if (j.contains("min_separation")) s.min_separation = j.at("min_separation").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("scene spec: bad field: ") + e.what());
  }
  return s;
}

std::string scene_spec_to_json(const SceneSpec& s) {
  nlohmann::json j{{"seed", s.seed},
                   {"num_instances", s.num_instances},
                   {"motion", to_string(s.motion)},
                   {"video_len", s.video_len},
                   {"width", s.width},
                   {"height", s.height},
                   {"num_classes", s.num_classes},
                   {"box_min", s.box_min},
                   {"box_max", s.box_max},
                   {"speed_min", s.speed_min},
                   {"speed_max", s.speed_max},
                   {"amplitude_min", s.amplitude_min},
                   {"amplitude_max", s.amplitude_max},
                   {"period_min", s.period_min},
                   {"period_max", s.period_max},
                   {"min_separation", s.min_separation}};
  return j.dump(2) + "\n";
}

SceneSpec read_scene_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open scene spec " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return scene_spec_from_json(ss.str());
}

VideoAnnotations generate_scene(const SceneSpec& spec) {
  validate(spec);
  Rng rng(spec.seed);
  VideoAnnotations video;
  video.video_id = "scene-" + std::to_string(spec.seed);
  video.num_frames = spec.video_len;
  video.width = spec.width;
  video.height = spec.height;

  // Center trajectories of already-placed instances, for separation checks.
  std::vector<std::vector<Point2d>> placed;

  for (int i = 0; i < spec.num_instances; ++i) {
    const int class_id = rng.uniform_int(0, spec.num_classes - 1);
    const double w = rng.uniform(spec.box_min, spec.box_max);
    const double h = rng.uniform(spec.box_min, spec.box_max);

    MotionCurve curve;
    curve.model = spec.motion;
    if (spec.motion == MotionModel::linear) {
      const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double speed = rng.uniform(spec.speed_min, spec.speed_max);
      curve.vx = speed * std::cos(angle);
      curve.vy = speed * std::sin(angle);
    } else if (spec.motion == MotionModel::sinusoidal) {
      curve.ax = rng.uniform(spec.amplitude_min, spec.amplitude_max);
      curve.ay = rng.uniform(spec.amplitude_min, spec.amplitude_max);
      curve.wx = 2.0 * std::numbers::pi / rng.uniform(spec.period_min, spec.period_max);
      curve.wy = 2.0 * std::numbers::pi / rng.uniform(spec.period_min, spec.period_max);
      curve.phx = rng.uniform(0.0, 2.0 * std::numbers::pi);
      curve.phy = rng.uniform(0.0, 2.0 * std::numbers::pi);
    }

    // A symmetric bound on the displacement gives a frame-independent feasible
    // band for the start center. Motion is capped at a quarter of the free
    // slack per axis so at least half of it stays available for placement.
    const double slack_x = spec.width - w;
    const double slack_y = spec.height - h;
    if (slack_x < 0.0 || slack_y < 0.0)
      throw Error("scene: box larger than the frame; shrink box_max");
    double bx = curve.bound_x(spec.video_len);
    double by = curve.bound_y(spec.video_len);
    double shrink = 1.0;
    if (bx > 0.0) shrink = std::min(shrink, 0.25 * slack_x / bx);
    if (by > 0.0) shrink = std::min(shrink, 0.25 * slack_y / by);
    if (shrink < 1.0) curve.scale(shrink);

    // Rejection-sample a start center keeping min_separation to every placed
    // instance at every frame. If a motion scale cannot be placed, back the
    // motion off deterministically before giving up.
    std::vector<Point2d> centers(static_cast<std::size_t>(spec.video_len));
    bool ok = false;
    for (const double motion_scale : {1.0, 0.5, 0.25, 0.0}) {
      MotionCurve scaled = curve;
      scaled.scale(motion_scale);
      const double sbx = scaled.bound_x(spec.video_len);
      const double sby = scaled.bound_y(spec.video_len);
      const double lo_x = w / 2.0 + sbx, hi_x = spec.width - w / 2.0 - sbx;
      const double lo_y = h / 2.0 + sby, hi_y = spec.height - h / 2.0 - sby;
      for (int attempt = 0; attempt < kPlacementTries && !ok; ++attempt) {
        const double cx = rng.uniform(lo_x, hi_x);
        const double cy = rng.uniform(lo_y, hi_y);
        for (int t = 0; t < spec.video_len; ++t)
          centers[static_cast<std::size_t>(t)] =
              Point2d{cx + scaled.dx(t), cy + scaled.dy(t)};
        ok = true;
        for (const auto& other : placed) {
          for (int t = 0; t < spec.video_len && ok; ++t) {
            const auto& a = centers[static_cast<std::size_t>(t)];
            const auto& b = other[static_cast<std::size_t>(t)];
            if (std::hypot(a.x - b.x, a.y - b.y) < spec.min_separation) ok = false;
          }
          if (!ok) break;
        }
      }
      if (ok) break;
    }
    if (!ok)
      throw Error("scene: could not place instance " + std::to_string(i) +
                  " with min_separation " + std::to_string(spec.min_separation) +
                  "; reduce instances or separation");

    Instance inst;
    inst.class_id = class_id;
    inst.start_frame = 0;
    inst.boxes.reserve(static_cast<std::size_t>(spec.video_len));
    for (int t = 0; t < spec.video_len; ++t) {
      const auto& c = centers[static_cast<std::size_t>(t)];
      BBox b{c.x - w / 2.0, c.y - h / 2.0, c.x + w / 2.0, c.y + h / 2.0};
      // Guard against last-ulp drift past the frame edge.
      b.x1 = std::clamp(b.x1, 0.0, static_cast<double>(spec.width));
      b.x2 = std::clamp(b.x2, 0.0, static_cast<double>(spec.width));
      b.y1 = std::clamp(b.y1, 0.0, static_cast<double>(spec.height));
      b.y2 = std::clamp(b.y2, 0.0, static_cast<double>(spec.height));
      inst.boxes.push_back(b);
    }
    video.instances.push_back(std::move(inst));
    placed.push_back(std::move(centers));
  }
  return video;
}

DenseMap render_size_map(std::span<const Instance> instances, int frame,
                         const GridSpec& spec, const RenderOptions& opts) {
  if (opts.size_splat_radius < 0) throw Error("render: size_splat_radius must be >= 0");
  DenseMap map(spec.grid_h(), spec.grid_w(), 2, 0.0);
  for (const Instance& inst : instances) {
    if (!inst.covers_frame(frame)) continue;
    const BBox& b = inst.box_at(frame);
    const GridPoint cell = size_cell(b, spec);
    const double sw = b.width() / spec.down_ratio;
    const double sh = b.height() / spec.down_ratio;
    const int r = opts.size_splat_radius;
    for (int y = cell.y - r; y <= cell.y + r; ++y) {
      for (int x = cell.x - r; x <= cell.x + r; ++x) {
        if (!map.in_grid(x, y)) continue;
        map.at(x, y, 0) = sw;
        map.at(x, y, 1) = sh;
      }
    }
  }
  return map;
}

WindowMaps render_perfect_maps(std::span<const Instance> instances, int window_start,
                               const GridSpec& spec, const RenderOptions& opts) {
  if (opts.movement_splat_radius < 0)
    throw Error("render: movement_splat_radius must be >= 0");
  std::vector<Instance> covering;
  for (const Instance& inst : instances)
    if (inst.covers_window(window_start, spec.clip_len)) covering.push_back(inst);

  WindowMaps maps;
  maps.start_frame = window_start;
  maps.center = encode_center_heatmap(covering, window_start, spec, opts.min_overlap);
  maps.movement = DenseMap(spec.grid_h(), spec.grid_w(), 2 * spec.clip_len, 0.0);
  for (const Instance& inst : covering) {
    const MovementTarget t = encode_movement(inst, window_start, spec);
    const int r = opts.movement_splat_radius;
    for (int y = t.anchor.y - r; y <= t.anchor.y + r; ++y) {
      for (int x = t.anchor.x - r; x <= t.anchor.x + r; ++x) {
        if (!maps.movement.in_grid(x, y)) continue;
        for (int c = 0; c < 2 * spec.clip_len; ++c)
          maps.movement.at(x, y, c) = t.deltas[static_cast<std::size_t>(c)];
      }
    }
  }
  maps.sizes.reserve(static_cast<std::size_t>(spec.clip_len));
  for (int j = 0; j < spec.clip_len; ++j)
    maps.sizes.push_back(render_size_map(instances, window_start + j, spec, opts));
  return maps;
}

void add_gaussian_noise(DenseMap& map, double sigma, std::uint64_t seed, double lo,
                        double hi) {
  if (sigma < 0.0) throw Error("perturb: sigma must be >= 0");
  if (!(lo <= hi)) throw Error("perturb: need lo <= hi");
  if (sigma == 0.0) return;
  Rng rng(seed);
  for (double& v : map.data()) v = std::clamp(v + sigma * rng.gaussian(), lo, hi);
}

void perturb_maps(WindowMaps& maps, const PerturbSpec& noise, std::uint64_t seed) {
  add_gaussian_noise(maps.center, noise.center_sigma, seed, 0.0, 1.0);
  add_gaussian_noise(maps.movement, noise.movement_sigma, seed + 1);
  for (std::size_t j = 0; j < maps.sizes.size(); ++j)
    add_gaussian_noise(maps.sizes[j], noise.size_sigma, seed + 2 + j, 0.0,
                       std::numeric_limits<double>::infinity());
}

}  // namespace tubekit
