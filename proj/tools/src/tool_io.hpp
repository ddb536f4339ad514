#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tubekit/evaluator.hpp"
#include "tubekit/geometry.hpp"
#include "tubekit/types.hpp"

namespace tubekit::tool {

/// Index of a maps directory produced by `tubekit synth`:
///   <dir>/manifest.json     this index
///   <dir>/annotations.json  ground truth
///   <dir>/maps/C_%06d.moct  center heatmap per window start
///   <dir>/maps/M_%06d.moct  movement map per window start
///   <dir>/maps/S_%06d.moct  size map per video frame
struct MapsManifest {
  std::string video_id;
  int num_frames = 0;
  GridSpec grid;
  std::vector<int> window_starts;
};

std::filesystem::path center_path(const std::filesystem::path& dir, int window_start);
std::filesystem::path movement_path(const std::filesystem::path& dir, int window_start);
std::filesystem::path size_path(const std::filesystem::path& dir, int frame);

void write_manifest(const MapsManifest& manifest, const std::filesystem::path& dir);
MapsManifest read_manifest(const std::filesystem::path& dir);

/// Tubelets travel as JSON Lines, one object per tubelet:
///   {"start_frame": int, "class_id": int, "score": num, "boxes": [[x1,y1,x2,y2], ...]}
void write_tubelets_jsonl(std::span<const Tubelet> tubelets,
                          const std::filesystem::path& path);
std::vector<Tubelet> read_tubelets_jsonl(const std::filesystem::path& path);

/// Tubes travel as one JSON document:
///   {"schema_version": 1, "video_id": str,
///    "tubes": [{"class_id": int, "score": num, "start_frame": int,
///               "end_frame": int, "boxes": [[x1,y1,x2,y2], ...]}, ...]}
struct TubesFile {
  std::string video_id;
  std::vector<Tube> tubes;
};

void write_tubes_json(std::span<const Tube> tubes, const std::string& video_id,
                      const std::filesystem::path& path);
TubesFile read_tubes_json(const std::filesystem::path& path);

nlohmann::json to_json(const MapResult& result);
nlohmann::json to_json(const VideoMapTable& table);
nlohmann::json to_json(const ErrorBreakdown& eb);

/// RGB canvas with 24-bit BMP output (no compression, bottom-up rows).
class Canvas {
 public:
  Canvas(int width, int height, std::uint8_t fill = 255);

  int width() const { return w_; }
  int height() const { return h_; }

  void draw_box(const BBox& box, std::array<std::uint8_t, 3> rgb, int thickness);
  void write_bmp(const std::filesystem::path& path) const;

 private:
  void fill_rect(int x1, int y1, int x2, int y2, std::array<std::uint8_t, 3> rgb);

  int w_ = 0, h_ = 0;
  std::vector<std::uint8_t> rgb_;
};

/// Stable per-class drawing color.
std::array<std::uint8_t, 3> class_color(int class_id);

}  // namespace tubekit::tool
