#include "tubekit/linker.hpp"

#include <algorithm>
#include <map>

namespace tubekit {

double tubelet_overlap(const Tubelet& a, const Tubelet& b) {
  const int first = std::max(a.start_frame, b.start_frame);
  const int last = std::min(a.end_frame(), b.end_frame());
  if (first > last) return 0.0;
  double sum = 0.0;
  for (int f = first; f <= last; ++f) sum += iou(a.box_at(f), b.box_at(f));
  return sum / static_cast<double>(last - first + 1);
}

void sort_candidates(std::vector<Tubelet>& tubelets, int key_index) {
  const auto key_center = [key_index](const Tubelet& t) {
    const BBox& b = t.boxes[static_cast<std::size_t>(
        std::min(key_index, t.length() - 1))];
    return Point2d{b.center_x(), b.center_y()};
  };
  std::stable_sort(tubelets.begin(), tubelets.end(),
                   [&](const Tubelet& a, const Tubelet& b) {
                     if (a.score != b.score) return a.score > b.score;
                     if (a.class_id != b.class_id) return a.class_id < b.class_id;
                     const Point2d ca = key_center(a);
                     const Point2d cb = key_center(b);
                     if (ca.y != cb.y) return ca.y < cb.y;
                     return ca.x < cb.x;
                   });
}

std::vector<Tubelet> select_candidates(std::span<const Tubelet> tubelets, int frame,
                                       int per_frame, int key_index) {
  if (per_frame < 1) throw Error("select_candidates: per_frame must be >= 1");
  std::vector<Tubelet> out;
  for (const Tubelet& t : tubelets)
    if (t.start_frame == frame) out.push_back(t);
  sort_candidates(out, key_index);
  if (static_cast<int>(out.size()) > per_frame)
    out.resize(static_cast<std::size_t>(per_frame));
  return out;
}

Linker::Linker(const GridSpec& spec, const LinkParams& params)
    : spec_(spec), params_(params) {
  effective_min_length_ = params.min_length > 0 ? params.min_length : spec.clip_len;
}

BBox Linker::averaged_box(const Link& link, int frame) const {
  double x1 = 0.0, y1 = 0.0, x2 = 0.0, y2 = 0.0;
  int count = 0;
  for (const Tubelet& m : link.members) {
    if (!m.covers_frame(frame)) continue;
    const BBox& b = m.box_at(frame);
    x1 += b.x1;
    y1 += b.y1;
    x2 += b.x2;
    y2 += b.y2;
    ++count;
  }
  if (count == 0) throw Error("Linker: no member covers requested frame");
  const double n = static_cast<double>(count);
  return BBox{x1 / n, y1 / n, x2 / n, y2 / n};
}

double Linker::overlap_with(const Link& link, const Tubelet& candidate) const {
  if (!params_.averaged_overlap) return tubelet_overlap(link.members.back(), candidate);
  const int link_end = link.members.back().end_frame();
  const int first = std::max(candidate.start_frame, link.members.front().start_frame);
  const int last = std::min(candidate.end_frame(), link_end);
  if (first > last) return 0.0;
  double sum = 0.0;
  for (int f = first; f <= last; ++f)
    sum += iou(averaged_box(link, f), candidate.box_at(f));
  return sum / static_cast<double>(last - first + 1);
}

void Linker::retire_stale(int frame) {
  // A link unextended through clip_len consecutive frames can never be
  // extended again (no temporal overlap remains), so retire it.
  std::vector<Link> still_active;
  still_active.reserve(active_.size());
  for (auto& link : active_) {
    if (frame - link.last_extended > spec_.clip_len)
      retired_.push_back(std::move(link));
    else
      still_active.push_back(std::move(link));
  }
  active_ = std::move(still_active);
}

void Linker::step(int frame, std::vector<Tubelet> frame_tubelets) {
  if (started_ && frame != cursor_ + 1)
    throw Error("Linker::step: frames must be consecutive (got " +
                std::to_string(frame) + " after " + std::to_string(cursor_) + ")");
  started_ = true;
  cursor_ = frame;

  retire_stale(frame);

  std::vector<Tubelet> candidates;
  candidates.reserve(frame_tubelets.size());
  for (Tubelet& t : frame_tubelets) {
    if (t.start_frame != frame)
      throw Error("Linker::step: tubelet start_frame does not match step frame");
    if (t.length() != spec_.clip_len)
      throw Error("Linker::step: tubelet length must equal clip_len");
    candidates.push_back(std::move(t));
  }
  sort_candidates(candidates, spec_.key_index);
  if (static_cast<int>(candidates.size()) > params_.candidates_per_frame)
    candidates.resize(static_cast<std::size_t>(params_.candidates_per_frame));

  // Existing links grab candidates in descending link-score order; each takes
  // the highest-scored unassigned same-class candidate above the overlap
  // threshold. Candidate order is canonical, so "first eligible" is it.
  std::vector<std::size_t> order(active_.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double sa = active_[a].mean_score();
    const double sb = active_[b].mean_score();
    if (sa != sb) return sa > sb;
    return active_[a].created_index < active_[b].created_index;
  });

  std::vector<bool> taken(candidates.size(), false);
  for (const std::size_t li : order) {
    Link& link = active_[li];
    for (std::size_t ci = 0; ci < candidates.size(); ++ci) {
      if (taken[ci]) continue;
      const Tubelet& cand = candidates[ci];
      if (cand.class_id != link.class_id) continue;
      if (!(overlap_with(link, cand) > params_.overlap_threshold)) continue;
      taken[ci] = true;
      link.score_sum += cand.score;
      link.score_count += 1;
      link.last_extended = frame;
      link.members.push_back(cand);
      ++assigned_;
      break;
    }
  }

  for (std::size_t ci = 0; ci < candidates.size(); ++ci) {
    if (taken[ci]) continue;
    Link link;
    link.class_id = candidates[ci].class_id;
    link.score_sum = candidates[ci].score;
    link.score_count = 1;
    link.created_index = next_index_++;
    link.last_extended = frame;
    link.members.push_back(std::move(candidates[ci]));
    active_.push_back(std::move(link));
    ++assigned_;
  }
}

Tube Linker::build_tube(const Link& link) {
  Tube tube;
  tube.class_id = link.class_id;
  tube.score = link.score_sum / static_cast<double>(link.score_count);
  tube.start_frame = link.members.front().start_frame;
  const int end = link.members.back().end_frame();
  tube.boxes.reserve(static_cast<std::size_t>(end - tube.start_frame + 1));
  // Per-frame box: coordinate-wise mean over the member tubelets covering the
  // frame, accumulated in member order.
  for (int f = tube.start_frame; f <= end; ++f) {
    double x1 = 0.0, y1 = 0.0, x2 = 0.0, y2 = 0.0;
    int count = 0;
    for (const Tubelet& m : link.members) {
      if (!m.covers_frame(f)) continue;
      const BBox& b = m.box_at(f);
      x1 += b.x1;
      y1 += b.y1;
      x2 += b.x2;
      y2 += b.y2;
      ++count;
    }
    const double n = static_cast<double>(count);
    tube.boxes.push_back(BBox{x1 / n, y1 / n, x2 / n, y2 / n});
  }
  return tube;
}

std::vector<Tube> Linker::take_finished() {
  std::vector<Tube> out;
  for (const Link& link : retired_) {
    Tube tube = build_tube(link);
    if (tube.score < params_.min_score) continue;
    if (tube.length() < effective_min_length_) continue;
    out.push_back(std::move(tube));
  }
  retired_.clear();
  return out;
}

std::vector<Tube> Linker::finish() {
  for (auto& link : active_) retired_.push_back(std::move(link));
  active_.clear();
  return take_finished();
}

std::vector<Tube> link_video(std::span<const Tubelet> tubelets, const GridSpec& spec,
                             const LinkParams& params) {
  Linker linker(spec, params);
  if (tubelets.empty()) return {};
  std::map<int, std::vector<Tubelet>> by_frame;
  for (const Tubelet& t : tubelets) by_frame[t.start_frame].push_back(t);
  const int first = by_frame.begin()->first;
  const int last = by_frame.rbegin()->first;
  std::vector<Tube> tubes;
  for (int f = first; f <= last; ++f) {
    auto it = by_frame.find(f);
    linker.step(f, it == by_frame.end() ? std::vector<Tubelet>{} : it->second);
    for (Tube& t : linker.take_finished()) tubes.push_back(std::move(t));
  }
  for (Tube& t : linker.finish()) tubes.push_back(std::move(t));
  return tubes;
}

StreamSession::StreamSession(const GridSpec& spec, const StreamParams& params,
                             WindowHeadFn heads)
    : spec_(spec), params_(params), heads_(std::move(heads)),
      linker_(spec, params.link) {
  if (!heads_) throw Error("StreamSession: window head provider is required");
}

std::vector<Tube> StreamSession::push_frame(DenseMap size_map) {
  if (size_map.channels() != 2 || size_map.grid_w() != spec_.grid_w() ||
      size_map.grid_h() != spec_.grid_h())
    throw Error("StreamSession: size map shape mismatch");
  buffer_.push_back(std::move(size_map));
  ++frames_pushed_;
  if (static_cast<int>(buffer_.size()) < spec_.clip_len) return {};

  const int window_start = frames_pushed_ - spec_.clip_len;
  auto [center, movement] = heads_(window_start);
  WindowMaps maps;
  maps.start_frame = window_start;
  maps.center = std::move(center);
  maps.movement = std::move(movement);
  maps.sizes.assign(buffer_.begin(), buffer_.end());

  auto tubelets = decode_tubelets(maps, spec_, params_.max_peaks, params_.mode);
  buffer_.pop_front();  // keep clip_len - 1 frames for the next window
  linker_.step(window_start, std::move(tubelets));
  return linker_.take_finished();
}

std::vector<Tube> StreamSession::finish() { return linker_.finish(); }

}  // namespace tubekit
