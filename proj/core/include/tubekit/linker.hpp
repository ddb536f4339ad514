#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "tubekit/decoder.hpp"
#include "tubekit/geometry.hpp"
#include "tubekit/types.hpp"

namespace tubekit {

struct LinkParams {
  /// A candidate extends a link only when overlap is strictly above this.
  double overlap_threshold = 0.5;
  /// Finished tubes below this mean score are dropped.
  double min_score = 0.05;
  /// Finished tubes shorter than this many frames are dropped; 0 means
  /// "one clip length".
  int min_length = 0;
  /// Top candidates kept per frame (by score).
  int candidates_per_frame = 10;
  /// When true, overlap compares the candidate against the link's running
  /// per-frame averaged boxes instead of only its most recent member.
  bool averaged_overlap = false;
};

/// Mean per-frame IoU between two tubelets over their temporally shared
/// frames; 0 when they share none.
double tubelet_overlap(const Tubelet& a, const Tubelet& b);

/// The canonical candidate order: score descending, ties by ascending
/// (class_id, key-frame center y, key-frame center x), remaining ties by
/// input order. key_index selects the key frame within each tubelet.
void sort_candidates(std::vector<Tubelet>& tubelets, int key_index);

/// Tubelets starting exactly at `frame`, in canonical order, truncated to
/// per_frame entries.
std::vector<Tubelet> select_candidates(std::span<const Tubelet> tubelets, int frame,
                                       int per_frame, int key_index);

/// Online tube builder. Feed one frame of candidates at a time (stride 1,
/// strictly increasing); finished tubes can be drained incrementally.
///
/// Per step, existing links are processed in descending link-score order;
/// each takes the highest-scored unassigned same-class candidate whose
/// overlap with the link exceeds the threshold. Unassigned candidates start
/// new links. A link not extended for clip_len consecutive frames is retired.
class Linker {
 public:
  Linker(const GridSpec& spec, const LinkParams& params);

  /// Advance to `frame` and link its tubelets (selection rule included).
  /// Frames must be presented consecutively.
  void step(int frame, std::vector<Tubelet> frame_tubelets);

  /// Tubes retired since the last drain, in retirement order, filtered by
  /// min_score / min_length.
  std::vector<Tube> take_finished();

  /// Retire all remaining links and return every undrained tube.
  std::vector<Tube> finish();

  int active_links() const { return static_cast<int>(active_.size()); }
  std::int64_t assigned_candidates() const { return assigned_; }

 private:
  struct Link {
    std::vector<Tubelet> members;
    int class_id = 0;
    double score_sum = 0.0;
    std::int64_t score_count = 0;
    std::int64_t created_index = 0;
    int last_extended = 0;

    double mean_score() const { return score_sum / static_cast<double>(score_count); }
  };

  double overlap_with(const Link& link, const Tubelet& candidate) const;
  BBox averaged_box(const Link& link, int frame) const;
  void retire_stale(int frame);
  static Tube build_tube(const Link& link);

  GridSpec spec_;
  LinkParams params_;
  int effective_min_length_ = 0;
  bool started_ = false;
  int cursor_ = 0;
  std::int64_t next_index_ = 0;
  std::int64_t assigned_ = 0;
  std::vector<Link> active_;
  std::vector<Link> retired_;
};

/// Offline linking: run the stride-1 step sequence over the whole tubelet
/// list (grouped by start frame) and return all surviving tubes.
std::vector<Tube> link_video(std::span<const Tubelet> tubelets, const GridSpec& spec,
                             const LinkParams& params);

struct StreamParams {
  int max_peaks = 100;
  DecodeMode mode = DecodeMode::full_movement;
  LinkParams link;
};

/// Online decoding session. Per-frame size maps arrive one at a time and are
/// buffered; once clip_len frames are available, each new frame completes a
/// window, whose center/movement maps are obtained from the provider. The
/// buffer never holds more than clip_len - 1 frames between pushes.
///
/// Feeding a whole video through push_frame and concatenating the returned
/// tubes (plus finish()) yields exactly the tubes of offline decode + link.
class StreamSession {
 public:
  /// Returns (center heatmap, movement map) for the window starting at the
  /// given frame.
  using WindowHeadFn = std::function<std::pair<DenseMap, DenseMap>(int window_start)>;

  StreamSession(const GridSpec& spec, const StreamParams& params, WindowHeadFn heads);

  /// Feed the size map of the next frame; returns tubes finished by this step.
  std::vector<Tube> push_frame(DenseMap size_map);

  /// Flush: retire all links and return the remaining tubes.
  std::vector<Tube> finish();

  int frames_pushed() const { return frames_pushed_; }
  int buffered_frames() const { return static_cast<int>(buffer_.size()); }

 private:
  GridSpec spec_;
  StreamParams params_;
  WindowHeadFn heads_;
  std::deque<DenseMap> buffer_;
  Linker linker_;
  int frames_pushed_ = 0;
};

}  // namespace tubekit
