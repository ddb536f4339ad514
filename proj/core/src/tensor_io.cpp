#include "tubekit/tensor_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include <json.hpp>

namespace tubekit {

namespace {

constexpr char kMagic[4] = {'M', 'O', 'C', 'T'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kMaxRank = 8;

void put_u32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

std::filesystem::path temp_sibling(const std::filesystem::path& path) {
  auto tmp = path;
  tmp += ".tmp";
  return tmp;
}

}  // namespace

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  const auto tmp = temp_sibling(path);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("rename failed for " + path.string() + ": " + ec.message());
}

void write_tensor(const Tensor& tensor, const std::filesystem::path& path) {
  if (tensor.dims.empty() || tensor.dims.size() > kMaxRank)
    throw Error("write_tensor: rank must be in [1, 8]");
  for (auto d : tensor.dims)
    if (d == 0) throw Error("write_tensor: zero-sized dim");
  if (tensor.values.size() != tensor.element_count())
    throw Error("write_tensor: value count does not match dims");
  for (float v : tensor.values)
    if (!std::isfinite(v)) throw Error("write_tensor: non-finite value");

  std::string buf;
  buf.reserve(16 + 4 * tensor.dims.size() + 4 * tensor.values.size());
  buf.append(kMagic, 4);
  put_u32(buf, kVersion);
  put_u32(buf, static_cast<std::uint32_t>(tensor.dims.size()));
  for (auto d : tensor.dims) put_u32(buf, d);
  for (float v : tensor.values) put_u32(buf, std::bit_cast<std::uint32_t>(v));
  write_file_atomic(path, buf);
}

Tensor read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open tensor file: " + path.string());
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(buf.data());
  const std::size_t n = buf.size();

  if (n < 12) throw Error("tensor file truncated (header): " + path.string());
  if (std::memcmp(p, kMagic, 4) != 0)
    throw Error("bad tensor magic in " + path.string());
  const std::uint32_t version = get_u32(p + 4);
  if (version != kVersion)
    throw Error("unsupported tensor version " + std::to_string(version) + " in " +
                path.string());
  const std::uint32_t rank = get_u32(p + 8);
  if (rank < 1 || rank > kMaxRank)
    throw Error("tensor rank out of range in " + path.string());
  if (n < 12 + 4ull * rank)
    throw Error("tensor file truncated (dims): " + path.string());

  Tensor t;
  t.dims.resize(rank);
  std::size_t count = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    t.dims[i] = get_u32(p + 12 + 4 * i);
    if (t.dims[i] == 0) throw Error("tensor has zero-sized dim: " + path.string());
    if (count > std::numeric_limits<std::size_t>::max() / t.dims[i])
      throw Error("tensor dims overflow: " + path.string());
    count *= t.dims[i];
  }
  const std::size_t header = 12 + 4ull * rank;
  if (n != header + 4ull * count)
    throw Error("tensor payload length does not match dims: " + path.string());

  t.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const float v = std::bit_cast<float>(get_u32(p + header + 4 * i));
    if (!std::isfinite(v))
      throw Error("tensor contains non-finite value: " + path.string());
    t.values[i] = v;
  }
  return t;
}

Tensor to_tensor(const DenseMap& map) {
  Tensor t;
  t.dims = {static_cast<std::uint32_t>(map.grid_h()),
            static_cast<std::uint32_t>(map.grid_w()),
            static_cast<std::uint32_t>(map.channels())};
  t.values.reserve(map.size());
  for (double v : map.data()) t.values.push_back(static_cast<float>(v));
  return t;
}

DenseMap dense_map_from(const Tensor& tensor) {
  if (tensor.dims.size() != 3)
    throw Error("dense_map_from: expected rank-3 tensor");
  DenseMap map(static_cast<int>(tensor.dims[0]), static_cast<int>(tensor.dims[1]),
               static_cast<int>(tensor.dims[2]));
  for (std::size_t i = 0; i < tensor.values.size(); ++i)
    map.data()[i] = static_cast<double>(tensor.values[i]);
  return map;
}

Tensor to_clip_tensor(std::span<const DenseMap> frames) {
  if (frames.empty()) throw Error("to_clip_tensor: empty frame list");
  for (const auto& f : frames)
    if (!f.same_shape(frames[0]))
      throw Error("to_clip_tensor: frames must share one shape");
  Tensor t;
  t.dims = {static_cast<std::uint32_t>(frames.size()),
            static_cast<std::uint32_t>(frames[0].grid_h()),
            static_cast<std::uint32_t>(frames[0].grid_w()),
            static_cast<std::uint32_t>(frames[0].channels())};
  t.values.reserve(frames.size() * frames[0].size());
  for (const auto& f : frames)
    for (double v : f.data()) t.values.push_back(static_cast<float>(v));
  return t;
}

std::vector<DenseMap> clip_from(const Tensor& tensor) {
  if (tensor.dims.size() != 4)
    throw Error("clip_from: expected rank-4 tensor");
  const int k = static_cast<int>(tensor.dims[0]);
  DenseMap proto(static_cast<int>(tensor.dims[1]), static_cast<int>(tensor.dims[2]),
                 static_cast<int>(tensor.dims[3]));
  std::vector<DenseMap> frames(static_cast<std::size_t>(k), proto);
  const std::size_t per = proto.size();
  for (int j = 0; j < k; ++j)
    for (std::size_t i = 0; i < per; ++i)
      frames[static_cast<std::size_t>(j)].data()[i] =
          static_cast<double>(tensor.values[static_cast<std::size_t>(j) * per + i]);
  return frames;
}

void write_dense_map(const DenseMap& map, const std::filesystem::path& path) {
  write_tensor(to_tensor(map), path);
}

DenseMap read_dense_map(const std::filesystem::path& path) {
  return dense_map_from(read_tensor(path));
}

void write_clip_maps(std::span<const DenseMap> frames, const std::filesystem::path& path) {
  write_tensor(to_clip_tensor(frames), path);
}

std::vector<DenseMap> read_clip_maps(const std::filesystem::path& path) {
  return clip_from(read_tensor(path));
}

namespace {

using nlohmann::json;

json box_to_json(const BBox& b) { return json::array({b.x1, b.y1, b.x2, b.y2}); }

BBox box_from_json(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 4)
    throw Error("annotations: box must be [x1,y1,x2,y2] at " + where);
  BBox b{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
  if (!b.valid())
    throw Error("annotations: invalid box coordinates at " + where);
  return b;
}

}  // namespace

VideoAnnotations read_annotations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open annotations: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error("annotations JSON parse error in " + path.string() + ": " + e.what());
  }
  try {
    VideoAnnotations v;
    v.video_id = j.at("video_id").get<std::string>();
    v.num_frames = j.at("num_frames").get<int>();
    v.width = j.at("W").get<int>();
    v.height = j.at("H").get<int>();
    if (v.num_frames < 1 || v.width < 1 || v.height < 1)
      throw Error("annotations: num_frames/W/H must be positive");
    for (const auto& ji : j.at("instances")) {
      Instance inst;
      inst.class_id = ji.at("class_id").get<int>();
      inst.start_frame = ji.at("start_frame").get<int>();
      if (inst.class_id < 0) throw Error("annotations: negative class_id");
      if (inst.start_frame < 0) throw Error("annotations: negative start_frame");
      const auto& boxes = ji.at("boxes");
      if (!boxes.is_array() || boxes.empty())
        throw Error("annotations: instance needs at least one box");
      for (std::size_t b = 0; b < boxes.size(); ++b)
        inst.boxes.push_back(box_from_json(boxes[b], v.video_id + " instance box " +
                                                         std::to_string(b)));
      if (inst.end_frame() >= v.num_frames)
        throw Error("annotations: instance extends past num_frames");
      v.instances.push_back(std::move(inst));
    }
    return v;
  } catch (const json::exception& e) {
    throw Error("annotations schema error in " + path.string() + ": " + e.what());
  }
}

void write_annotations(const VideoAnnotations& video, const std::filesystem::path& path) {
  json j;
  j["video_id"] = video.video_id;
  j["num_frames"] = video.num_frames;
  j["W"] = video.width;
  j["H"] = video.height;
  auto arr = json::array();
  for (const auto& inst : video.instances) {
    json ji;
    ji["class_id"] = inst.class_id;
    ji["start_frame"] = inst.start_frame;
    auto boxes = json::array();
    for (const auto& b : inst.boxes) boxes.push_back(box_to_json(b));
    ji["boxes"] = std::move(boxes);
    arr.push_back(std::move(ji));
  }
  j["instances"] = std::move(arr);
  write_file_atomic(path, j.dump(2) + "\n");
}

}  // namespace tubekit
