#pragma once

#include <string>
#include <vector>

#include "tubekit/geometry.hpp"

namespace tubekit {

/// Ground-truth action instance: one box per frame over a contiguous frame
/// range starting at start_frame. end_frame is implied by the box count.
struct Instance {
  int class_id = 0;
  int start_frame = 0;
  std::vector<BBox> boxes;

  int length() const { return static_cast<int>(boxes.size()); }
  int end_frame() const { return start_frame + length() - 1; }

  bool covers_frame(int frame) const {
    return frame >= start_frame && frame <= end_frame();
  }
  /// True when every frame of [window_start, window_start + len) is annotated.
  bool covers_window(int window_start, int len) const {
    return covers_frame(window_start) && covers_frame(window_start + len - 1);
  }
  const BBox& box_at(int frame) const {
    if (!covers_frame(frame)) throw Error("Instance: frame outside extent");
    return boxes[static_cast<std::size_t>(frame - start_frame)];
  }
};

/// One decoded clip-level detection: clip_len consecutive boxes (input
/// pixels), a class, and a confidence score. start_frame is the video frame
/// of the first box.
struct Tubelet {
  int start_frame = 0;
  int class_id = 0;
  double score = 0.0;
  std::vector<BBox> boxes;

  int length() const { return static_cast<int>(boxes.size()); }
  int end_frame() const { return start_frame + length() - 1; }
  bool covers_frame(int frame) const {
    return frame >= start_frame && frame <= end_frame();
  }
  const BBox& box_at(int frame) const {
    if (!covers_frame(frame)) throw Error("Tubelet: frame outside extent");
    return boxes[static_cast<std::size_t>(frame - start_frame)];
  }
};

/// Video-level detection produced by linking tubelets: one box per covered
/// frame, a class, and a score (mean of member tubelet scores).
struct Tube {
  int class_id = 0;
  double score = 0.0;
  int start_frame = 0;
  std::vector<BBox> boxes;

  int length() const { return static_cast<int>(boxes.size()); }
  int end_frame() const { return start_frame + length() - 1; }
  bool covers_frame(int frame) const {
    return frame >= start_frame && frame <= end_frame();
  }
  const BBox& box_at(int frame) const {
    if (!covers_frame(frame)) throw Error("Tube: frame outside extent");
    return boxes[static_cast<std::size_t>(frame - start_frame)];
  }
};

/// Ground truth for one video.
struct VideoAnnotations {
  std::string video_id;
  int num_frames = 0;
  int width = 0;
  int height = 0;
  std::vector<Instance> instances;
};

}  // namespace tubekit
