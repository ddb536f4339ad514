#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tubekit/dense_map.hpp"
#include "tubekit/types.hpp"

namespace tubekit {

/// On-disk dense tensor container (see README for the byte-exact layout):
///
///   bytes 0..3   magic "MOCT"
///   bytes 4..7   format version, little-endian uint32 (currently 1)
///   bytes 8..11  rank, little-endian uint32 (1..8)
///   then         rank dims, little-endian uint32 each
///   then         prod(dims) IEEE-754 binary32 values, little-endian,
///                row-major (last dim fastest)
///
/// Values must be finite; read and write both reject NaN/Inf. Rank-3 tensors
/// are (grid_h, grid_w, channels) dense maps; rank-4 tensors are
/// (clip_len, grid_h, grid_w, channels) per-frame stacks.
struct Tensor {
  std::vector<std::uint32_t> dims;
  std::vector<float> values;

  std::size_t element_count() const {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return dims.empty() ? 0 : n;
  }
};

/// Serialize to the container format. Writes are atomic: data goes to a
/// temporary file in the same directory which is then renamed over `path`.
void write_tensor(const Tensor& tensor, const std::filesystem::path& path);

/// Parse a container file. Throws Error on bad magic, unsupported version,
/// bad rank, payload length mismatching the dims, or non-finite values.
Tensor read_tensor(const std::filesystem::path& path);

/// Rank-3 bridge to DenseMap (values converted double <-> float).
Tensor to_tensor(const DenseMap& map);
DenseMap dense_map_from(const Tensor& tensor);

/// Rank-4 bridge: stack of per-frame maps with identical shapes.
Tensor to_clip_tensor(std::span<const DenseMap> frames);
std::vector<DenseMap> clip_from(const Tensor& tensor);

/// Convenience wrappers combining the bridges with file I/O.
void write_dense_map(const DenseMap& map, const std::filesystem::path& path);
DenseMap read_dense_map(const std::filesystem::path& path);
void write_clip_maps(std::span<const DenseMap> frames, const std::filesystem::path& path);
std::vector<DenseMap> read_clip_maps(const std::filesystem::path& path);

/// Annotation JSON for one video:
///   {"video_id": str, "num_frames": int, "W": int, "H": int,
///    "instances": [{"class_id": int, "start_frame": int,
///                   "boxes": [[x1,y1,x2,y2], ...]}, ...]}
/// An instance's temporal extent is [start_frame, start_frame + len(boxes) - 1].
/// Loading validates box shape, coordinate ordering, finiteness, and that
/// every instance lies within [0, num_frames).
VideoAnnotations read_annotations(const std::filesystem::path& path);
void write_annotations(const VideoAnnotations& video, const std::filesystem::path& path);

/// Atomically write `contents` to `path` (temp file + rename).
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace tubekit
