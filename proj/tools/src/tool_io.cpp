#include "tool_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "tubekit/tensor_io.hpp"

namespace tubekit::tool {

namespace {

using nlohmann::json;

std::string numbered(const char* prefix, int n) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s_%06d.moct", prefix, n);
  return buf;
}

json load_json(const std::filesystem::path& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw IoError(std::string("cannot open ") + what + ": " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(std::string(what) + " JSON parse error in " + path.string() + ": " +
                e.what());
  }
  return j;
}

json box_to_json(const BBox& b) { return json::array({b.x1, b.y1, b.x2, b.y2}); }

BBox box_from_json(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 4)
    throw Error(std::string(what) + ": box must be [x1,y1,x2,y2]");
  BBox b{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
  if (!b.valid()) throw Error(std::string(what) + ": invalid box coordinates");
  return b;
}

json per_class_json(const MapResult& r) {
  json arr = json::array();
  for (const ClassAp& c : r.per_class)
    arr.push_back(json{{"class_id", c.class_id},
                       {"ap", c.ap},
                       {"num_gt", c.num_gt},
                       {"num_det", c.num_det}});
  return arr;
}

}  // namespace

std::filesystem::path center_path(const std::filesystem::path& dir, int window_start) {
  return dir / "maps" / numbered("C", window_start);
}

std::filesystem::path movement_path(const std::filesystem::path& dir, int window_start) {
  return dir / "maps" / numbered("M", window_start);
}

std::filesystem::path size_path(const std::filesystem::path& dir, int frame) {
  return dir / "maps" / numbered("S", frame);
}

void write_manifest(const MapsManifest& m, const std::filesystem::path& dir) {
  json j;
  j["schema_version"] = 1;
  j["video_id"] = m.video_id;
  j["num_frames"] = m.num_frames;
  j["grid"] = json{{"clip_len", m.grid.clip_len},     {"width", m.grid.width},
                   {"height", m.grid.height},         {"down_ratio", m.grid.down_ratio},
                   {"num_classes", m.grid.num_classes}, {"key_index", m.grid.key_index}};
  j["annotations"] = "annotations.json";
  j["window_starts"] = m.window_starts;
  j["center_pattern"] = "maps/C_%06d.moct";
  j["movement_pattern"] = "maps/M_%06d.moct";
  j["size_pattern"] = "maps/S_%06d.moct";
  write_file_atomic(dir / "manifest.json", j.dump(2) + "\n");
}

MapsManifest read_manifest(const std::filesystem::path& dir) {
  const json j = load_json(dir / "manifest.json", "manifest");
  try {
    if (j.at("schema_version").get<int>() != 1)
      throw Error("manifest: unsupported schema_version");
    MapsManifest m;
    m.video_id = j.at("video_id").get<std::string>();
    m.num_frames = j.at("num_frames").get<int>();
    const json& g = j.at("grid");
    m.grid = GridSpec::make(g.at("clip_len").get<int>(), g.at("width").get<int>(),
                            g.at("height").get<int>(), g.at("down_ratio").get<int>(),
                            g.at("num_classes").get<int>(), g.at("key_index").get<int>());
    m.window_starts = j.at("window_starts").get<std::vector<int>>();
    if (m.num_frames < 1) throw Error("manifest: num_frames must be positive");
    for (int s : m.window_starts)
      if (s < 0 || s + m.grid.clip_len > m.num_frames)
        throw Error("manifest: window start out of range: " + std::to_string(s));
    return m;
  } catch (const json::exception& e) {
    throw Error(std::string("manifest schema error: ") + e.what());
  }
}

void write_tubelets_jsonl(std::span<const Tubelet> tubelets,
                          const std::filesystem::path& path) {
  std::string out;
  for (const Tubelet& t : tubelets) {
    json j;
    j["start_frame"] = t.start_frame;
    j["class_id"] = t.class_id;
    j["score"] = t.score;
    json boxes = json::array();
    for (const BBox& b : t.boxes) boxes.push_back(box_to_json(b));
    j["boxes"] = std::move(boxes);
    out += j.dump();
    out += '\n';
  }
  write_file_atomic(path, out);
}

std::vector<Tubelet> read_tubelets_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open tubelets: " + path.string());
  std::vector<Tubelet> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw Error("tubelets line " + std::to_string(line_no) + ": " + e.what());
    }
    try {
      Tubelet t;
      t.start_frame = j.at("start_frame").get<int>();
      t.class_id = j.at("class_id").get<int>();
      t.score = j.at("score").get<double>();
      for (const json& jb : j.at("boxes")) t.boxes.push_back(box_from_json(jb, "tubelets"));
      if (t.boxes.empty()) throw Error("tubelets: empty box list");
      if (t.start_frame < 0) throw Error("tubelets: negative start_frame");
      if (t.class_id < 0) throw Error("tubelets: negative class_id");
      if (!std::isfinite(t.score)) throw Error("tubelets: non-finite score");
      out.push_back(std::move(t));
    } catch (const json::exception& e) {
      throw Error("tubelets line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void write_tubes_json(std::span<const Tube> tubes, const std::string& video_id,
                      const std::filesystem::path& path) {
  json arr = json::array();
  for (const Tube& t : tubes) {
    json j;
    j["class_id"] = t.class_id;
    j["score"] = t.score;
    j["start_frame"] = t.start_frame;
    j["end_frame"] = t.end_frame();
    json boxes = json::array();
    for (const BBox& b : t.boxes) boxes.push_back(box_to_json(b));
    j["boxes"] = std::move(boxes);
    arr.push_back(std::move(j));
  }
  json root{{"schema_version", 1}, {"video_id", video_id}, {"tubes", std::move(arr)}};
  write_file_atomic(path, root.dump(2) + "\n");
}

TubesFile read_tubes_json(const std::filesystem::path& path) {
  const json j = load_json(path, "tubes");
  try {
    if (j.at("schema_version").get<int>() != 1)
      throw Error("tubes: unsupported schema_version");
    TubesFile f;
    f.video_id = j.at("video_id").get<std::string>();
    for (const json& jt : j.at("tubes")) {
      Tube t;
      t.class_id = jt.at("class_id").get<int>();
      t.score = jt.at("score").get<double>();
      t.start_frame = jt.at("start_frame").get<int>();
      for (const json& jb : jt.at("boxes")) t.boxes.push_back(box_from_json(jb, "tubes"));
      if (t.boxes.empty()) throw Error("tubes: empty box list");
      if (t.start_frame < 0) throw Error("tubes: negative start_frame");
      if (t.class_id < 0) throw Error("tubes: negative class_id");
      if (!std::isfinite(t.score)) throw Error("tubes: non-finite score");
      if (jt.contains("end_frame") && jt.at("end_frame").get<int>() != t.end_frame())
        throw Error("tubes: end_frame disagrees with box count");
      f.tubes.push_back(std::move(t));
    }
    return f;
  } catch (const json::exception& e) {
    throw Error(std::string("tubes schema error: ") + e.what());
  }
}

nlohmann::json to_json(const MapResult& result) {
  return json{{"mean_ap", result.mean_ap}, {"per_class", per_class_json(result)}};
}

nlohmann::json to_json(const VideoMapTable& table) {
  json rows = json::array();
  for (const VideoMapRow& row : table.rows) {
    json r = to_json(row.result);
    r["threshold"] = row.threshold;
    rows.push_back(std::move(r));
  }
  json j;
  j["rows"] = std::move(rows);
  j["integrated_050_095"] = to_json(table.integrated);
  return j;
}

nlohmann::json to_json(const ErrorBreakdown& eb) {
  json j;
  j["num_dets"] = eb.num_dets;
  j["num_gts"] = eb.num_gts;
  j["counts"] = json{{"correct", eb.correct}, {"class", eb.e_class}, {"loc", eb.e_loc},
                     {"time", eb.e_time},     {"other", eb.e_other}, {"missed", eb.missed}};
  j["fractions"] = json{{"correct", eb.correct_fraction()}, {"class", eb.class_fraction()},
                        {"loc", eb.loc_fraction()},         {"time", eb.time_fraction()},
                        {"other", eb.other_fraction()},     {"missed", eb.missed_fraction()}};
  return j;
}

Canvas::Canvas(int width, int height, std::uint8_t fill) : w_(width), h_(height) {
  if (width < 1 || height < 1) throw Error("Canvas: size must be positive");
  rgb_.assign(static_cast<std::size_t>(width) * height * 3, fill);
}

void Canvas::fill_rect(int x1, int y1, int x2, int y2, std::array<std::uint8_t, 3> rgb) {
  x1 = std::max(x1, 0);
  y1 = std::max(y1, 0);
  x2 = std::min(x2, w_ - 1);
  y2 = std::min(y2, h_ - 1);
  for (int y = y1; y <= y2; ++y) {
    for (int x = x1; x <= x2; ++x) {
      std::uint8_t* px = &rgb_[(static_cast<std::size_t>(y) * w_ + x) * 3];
      px[0] = rgb[0];
      px[1] = rgb[1];
      px[2] = rgb[2];
    }
  }
}

void Canvas::draw_box(const BBox& box, std::array<std::uint8_t, 3> rgb, int thickness) {
  if (thickness < 1) throw Error("Canvas: thickness must be >= 1");
  const int x1 = static_cast<int>(std::lround(box.x1));
  const int y1 = static_cast<int>(std::lround(box.y1));
  const int x2 = static_cast<int>(std::lround(box.x2));
  const int y2 = static_cast<int>(std::lround(box.y2));
  const int t = thickness;
  fill_rect(x1, y1, x2, y1 + t - 1, rgb);  // top
  fill_rect(x1, y2 - t + 1, x2, y2, rgb);  // bottom
  fill_rect(x1, y1, x1 + t - 1, y2, rgb);  // left
  fill_rect(x2 - t + 1, y1, x2, y2, rgb);  // right
}

void Canvas::write_bmp(const std::filesystem::path& path) const {
  const int row_bytes = w_ * 3;
  const int padding = (4 - row_bytes % 4) % 4;
  const std::uint32_t image_size = static_cast<std::uint32_t>((row_bytes + padding) * h_);
  const std::uint32_t file_size = 54 + image_size;

  std::string buf;
  buf.reserve(file_size);
  auto put16 = [&buf](std::uint16_t v) {
    buf.push_back(static_cast<char>(v & 0xff));
    buf.push_back(static_cast<char>(v >> 8));
  };
  auto put32 = [&buf](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  };
  buf += "BM";
  put32(file_size);
  put16(0);
  put16(0);
  put32(54);  // pixel data offset
  put32(40);  // BITMAPINFOHEADER
  put32(static_cast<std::uint32_t>(w_));
  put32(static_cast<std::uint32_t>(h_));  // positive height: bottom-up rows
  put16(1);
  put16(24);
  put32(0);  // BI_RGB
  put32(image_size);
  put32(2835);  // 72 dpi
  put32(2835);
  put32(0);
  put32(0);
  for (int y = h_ - 1; y >= 0; --y) {
    for (int x = 0; x < w_; ++x) {
      const std::uint8_t* px = &rgb_[(static_cast<std::size_t>(y) * w_ + x) * 3];
      buf.push_back(static_cast<char>(px[2]));  // BGR order
      buf.push_back(static_cast<char>(px[1]));
      buf.push_back(static_cast<char>(px[0]));
    }
    for (int p = 0; p < padding; ++p) buf.push_back('\0');
  }
  write_file_atomic(path, buf);
}

std::array<std::uint8_t, 3> class_color(int class_id) {
  static constexpr std::array<std::array<std::uint8_t, 3>, 12> kPalette{{
      {230, 25, 75},   {60, 180, 75},   {0, 130, 200},  {245, 130, 48},
      {145, 30, 180},  {70, 240, 240},  {240, 50, 230}, {210, 160, 60},
      {0, 128, 128},   {220, 100, 170}, {154, 99, 36},  {128, 128, 0},
  }};
  const int i = class_id % static_cast<int>(kPalette.size());
  return kPalette[static_cast<std::size_t>(i < 0 ? i + 12 : i)];
}

}  // namespace tubekit::tool
