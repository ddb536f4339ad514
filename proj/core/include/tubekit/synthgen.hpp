#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>

#include "tubekit/decoder.hpp"
#include "tubekit/geometry.hpp"
#include "tubekit/types.hpp"

namespace tubekit {

enum class MotionModel { static_box, linear, sinusoidal };

MotionModel motion_from_string(const std::string& s);
std::string to_string(MotionModel m);

/// Parameters for one synthetic scene. Generation is fully determined by the
/// seed: identical specs give byte-identical annotations.
struct SceneSpec {
  std::uint64_t seed = 1;
  int num_instances = 3;
  MotionModel motion = MotionModel::linear;
  int video_len = 24;
  int width = 288;
  int height = 288;
  int num_classes = 24;
  double box_min = 32.0;   // box edge length range, pixels
  double box_max = 80.0;
  double speed_min = 1.0;  // linear motion, pixels/frame
  double speed_max = 4.0;
  double amplitude_min = 8.0;   // sinusoidal motion, pixels
  double amplitude_max = 24.0;
  double period_min = 10.0;     // sinusoidal motion, frames
  double period_max = 30.0;
  double min_separation = 72.0;  // min distance between instance centers
};

SceneSpec scene_spec_from_json(const std::string& text);
std::string scene_spec_to_json(const SceneSpec& spec);
SceneSpec read_scene_spec(const std::filesystem::path& path);

/// Build a scene: instances span the whole video, boxes stay inside the
/// frame, and instance centers keep min_separation distance at every frame.
/// Motion too large for the frame is shrunk to fit; a box that cannot fit at
/// all, or separation that cannot be satisfied, raises Error.
VideoAnnotations generate_scene(const SceneSpec& spec);

struct RenderOptions {
  double min_overlap = 0.7;
  /// Chebyshev radius (cells) to replicate each movement / size target into;
  /// 0 renders exactly the sparse supervision cells. Splatting models a
  /// locally-constant predictor, which the decoder's ablation modes need to
  /// read plausible values off the supervised cells. Within an overlap the
  /// later instance wins.
  int movement_splat_radius = 0;
  int size_splat_radius = 0;
};

/// Idealized per-frame size map: every instance covering `frame` writes its
/// grid-unit (w, h) at its quantized center cell.
DenseMap render_size_map(std::span<const Instance> instances, int frame,
                         const GridSpec& spec, const RenderOptions& opts = {});

/// Idealized predictions for one window: the encoder's ground-truth heatmap,
/// a movement map holding each covering instance's deltas at its anchor cell,
/// and per-frame size maps. Decoding these maps reproduces the instances.
WindowMaps render_perfect_maps(std::span<const Instance> instances, int window_start,
                               const GridSpec& spec, const RenderOptions& opts = {});

struct PerturbSpec {
  double center_sigma = 0.0;    // heatmap noise, re-clamped to [0, 1]
  double movement_sigma = 0.0;  // grid units
  double size_sigma = 0.0;      // grid units, sizes re-clamped to >= 0
};

/// Add seeded i.i.d. gaussian noise to every cell, clamping results into
/// [lo, hi]. sigma == 0 leaves the map bit-identical.
void add_gaussian_noise(DenseMap& map, double sigma, std::uint64_t seed,
                        double lo = -std::numeric_limits<double>::infinity(),
                        double hi = std::numeric_limits<double>::infinity());

/// Noise for a whole window: center from `seed`, movement from `seed + 1`,
/// the j-th size map from `seed + 2 + j`.
void perturb_maps(WindowMaps& maps, const PerturbSpec& noise, std::uint64_t seed);

}  // namespace tubekit
