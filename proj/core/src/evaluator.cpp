#include "tubekit/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "tubekit/parallel.hpp"

namespace tubekit {

double tube_iou(int start_a, std::span<const BBox> boxes_a, int start_b,
                std::span<const BBox> boxes_b) {
  if (boxes_a.empty() || boxes_b.empty()) return 0.0;
  const int end_a = start_a + static_cast<int>(boxes_a.size()) - 1;
  const int end_b = start_b + static_cast<int>(boxes_b.size()) - 1;
  const int first = std::max(start_a, start_b);
  const int last = std::min(end_a, end_b);
  if (first > last) return 0.0;
  const int inter = last - first + 1;
  const int uni = static_cast<int>(boxes_a.size()) + static_cast<int>(boxes_b.size()) -
                  inter;
  double spatial = 0.0;
  for (int f = first; f <= last; ++f)
    spatial += iou(boxes_a[static_cast<std::size_t>(f - start_a)],
                   boxes_b[static_cast<std::size_t>(f - start_b)]);
  spatial /= static_cast<double>(inter);
  return (static_cast<double>(inter) / static_cast<double>(uni)) * spatial;
}

double tube_iou(const Tube& det, const Instance& gt) {
  return tube_iou(det.start_frame, det.boxes, gt.start_frame, gt.boxes);
}

double average_precision(std::vector<ScoredMatch> matches, int num_gt) {
  if (num_gt <= 0) throw Error("average_precision: num_gt must be positive");
  std::stable_sort(matches.begin(), matches.end(),
                   [](const ScoredMatch& a, const ScoredMatch& b) {
                     return a.score > b.score;
                   });
  const std::size_t n = matches.size();
  if (n == 0) return 0.0;
  std::vector<double> precision(n);
  int tp = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (matches[k].tp) ++tp;
    precision[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
  }
  // Upper precision envelope: max precision at or beyond each rank.
  for (std::size_t k = n - 1; k-- > 0;)
    precision[k] = std::max(precision[k], precision[k + 1]);
  double ap = 0.0;
  for (std::size_t k = 0; k < n; ++k)
    if (matches[k].tp) ap += precision[k] / static_cast<double>(num_gt);
  return ap;
}

namespace {

/// Greedy matching for one class. Detections are visited in descending score
/// (ties by input index); each is paired with its highest-IoU ground truth in
/// its own group (ties by lowest ground-truth index) and is a true positive
/// iff that IoU is strictly above the threshold and the ground truth is still
/// free. Pairing against the best ground truth overall (not the best
/// unmatched) keeps results invariant to reordering of equal-score
/// detections.
struct ClassMatchInput {
  std::vector<double> scores;              // per detection
  std::vector<std::vector<double>> ious;   // [det][gt], -1 when groups differ
  int num_gt = 0;
};

struct ClassMatchOutput {
  std::vector<std::uint8_t> is_tp;  // per detection, input order
  std::vector<std::uint8_t> gt_matched;
  double ap = 0.0;
};

ClassMatchOutput match_class(const ClassMatchInput& in, double iou_thr) {
  const std::size_t nd = in.scores.size();
  std::vector<std::size_t> order(nd);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return in.scores[a] > in.scores[b];
  });

  ClassMatchOutput out;
  out.is_tp.assign(nd, 0);
  out.gt_matched.assign(static_cast<std::size_t>(in.num_gt), 0);
  std::vector<ScoredMatch> matches;
  matches.reserve(nd);
  for (const std::size_t d : order) {
    int best = -1;
    double best_iou = 0.0;
    const auto& row = in.ious[d];
    for (int g = 0; g < in.num_gt; ++g) {
      const double v = row[static_cast<std::size_t>(g)];
      if (v > best_iou) {
        best_iou = v;
        best = g;
      }
    }
    bool tp = false;
    if (best >= 0 && best_iou > iou_thr && !out.gt_matched[static_cast<std::size_t>(best)]) {
      out.gt_matched[static_cast<std::size_t>(best)] = 1;
      tp = true;
    }
    out.is_tp[d] = tp ? 1 : 0;
    matches.push_back(ScoredMatch{in.scores[d], tp});
  }
  out.ap = in.num_gt > 0 ? average_precision(std::move(matches), in.num_gt) : 0.0;
  return out;
}

int class_of(const FrameDet& d) { return d.class_id; }
int class_of(const FrameGt& g) { return g.class_id; }
int class_of(const TubeDet& d) { return d.tube.class_id; }
int class_of(const TubeGt& g) { return g.instance.class_id; }
double score_of(const FrameDet& d) { return d.score; }
double score_of(const TubeDet& d) { return d.tube.score; }

template <typename Det, typename Gt, typename OverlapFn>
MapResult map_over_classes(std::span<const Det> dets, std::span<const Gt> gts,
                           OverlapFn&& overlap, double iou_thr, int workers) {
  std::set<int> class_set;
  for (const Gt& g : gts) class_set.insert(class_of(g));
  std::vector<int> classes(class_set.begin(), class_set.end());

  MapResult result;
  result.per_class.resize(classes.size());
  parallel_for(static_cast<int>(classes.size()), workers, [&](int idx) {
    const int cls = classes[static_cast<std::size_t>(idx)];
    std::vector<const Det*> cdets;
    for (const Det& d : dets)
      if (class_of(d) == cls) cdets.push_back(&d);
    std::vector<const Gt*> cgts;
    for (const Gt& g : gts)
      if (class_of(g) == cls) cgts.push_back(&g);

    ClassMatchInput in;
    in.num_gt = static_cast<int>(cgts.size());
    in.scores.reserve(cdets.size());
    in.ious.reserve(cdets.size());
    for (const Det* d : cdets) {
      in.scores.push_back(score_of(*d));
      std::vector<double> row(cgts.size());
      for (std::size_t g = 0; g < cgts.size(); ++g) row[g] = overlap(*d, *cgts[g]);
      in.ious.push_back(std::move(row));
    }
    const auto out = match_class(in, iou_thr);
    result.per_class[static_cast<std::size_t>(idx)] =
        ClassAp{cls, out.ap, in.num_gt, static_cast<int>(cdets.size())};
  });

  double sum = 0.0;
  for (const ClassAp& c : result.per_class) sum += c.ap;
  result.mean_ap = result.per_class.empty()
                       ? 0.0
                       : sum / static_cast<double>(result.per_class.size());
  return result;
}

}  // namespace

MapResult frame_map(std::span<const FrameDet> dets, std::span<const FrameGt> gts,
                    double iou_thr, int workers) {
  const auto overlap = [](const FrameDet& d, const FrameGt& g) {
    if (d.video_id != g.video_id || d.frame != g.frame) return -1.0;
    return iou(d.box, g.box);
  };
  return map_over_classes(dets, gts, overlap, iou_thr, workers);
}

MapResult video_map_at(std::span<const TubeDet> dets, std::span<const TubeGt> gts,
                       double iou_thr, int workers) {
  const auto overlap = [](const TubeDet& d, const TubeGt& g) {
    if (d.video_id != g.video_id) return -1.0;
    return tube_iou(d.tube, g.instance);
  };
  return map_over_classes(dets, gts, overlap, iou_thr, workers);
}

VideoMapTable video_map(std::span<const TubeDet> dets, std::span<const TubeGt> gts,
                        std::vector<double> thresholds, int workers) {
  VideoMapTable table;
  for (const double thr : thresholds)
    table.rows.push_back(VideoMapRow{thr, video_map_at(dets, gts, thr, workers)});

  // Integrated 0.5:0.95 band: mean over the ten thresholds, per class.
  std::vector<MapResult> band;
  for (int i = 0; i < 10; ++i)
    band.push_back(video_map_at(dets, gts, 0.5 + 0.05 * i, workers));
  MapResult integrated;
  if (!band.empty() && !band[0].per_class.empty()) {
    integrated.per_class = band[0].per_class;
    for (auto& c : integrated.per_class) c.ap = 0.0;
    for (const MapResult& r : band)
      for (std::size_t i = 0; i < r.per_class.size(); ++i)
        integrated.per_class[i].ap += r.per_class[i].ap / static_cast<double>(band.size());
    double sum = 0.0;
    for (const ClassAp& c : integrated.per_class) sum += c.ap;
    integrated.mean_ap = sum / static_cast<double>(integrated.per_class.size());
  }
  table.integrated = std::move(integrated);
  return table;
}

ErrorBreakdown error_analysis(std::span<const FrameDet> dets,
                              std::span<const FrameGt> gts, double iou_thr,
                              double score_thr) {
  ErrorBreakdown out;
  out.num_gts = static_cast<std::int64_t>(gts.size());

  std::set<std::tuple<int, int, int>> class_at;    // (video, frame, class)
  std::set<std::pair<int, int>> class_in_video;    // (video, class)
  for (const FrameGt& g : gts) {
    class_at.insert({g.video_id, g.frame, g.class_id});
    class_in_video.insert({g.video_id, g.class_id});
  }

  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < dets.size(); ++i)
    if (dets[i].score >= score_thr) order.push_back(i);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dets[a].score > dets[b].score;
  });
  out.num_dets = static_cast<std::int64_t>(order.size());

  std::vector<std::uint8_t> gt_matched(gts.size(), 0);
  for (const std::size_t di : order) {
    const FrameDet& d = dets[di];
    const bool class_here =
        class_at.count({d.video_id, d.frame, d.class_id}) > 0;
    const bool class_somewhere = class_in_video.count({d.video_id, d.class_id}) > 0;

    if (!class_here && class_somewhere) {
      ++out.e_time;
      continue;
    }
    // Highest-IoU same-class ground truth in this frame (best overall, ties
    // by lowest index), mirroring the AP matcher.
    int best = -1;
    double best_iou = 0.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (gts[g].video_id != d.video_id || gts[g].frame != d.frame) continue;
      if (gts[g].class_id != d.class_id) continue;
      const double v = iou(d.box, gts[g].box);
      if (v > best_iou) {
        best_iou = v;
        best = static_cast<int>(g);
      }
    }
    if (best >= 0 && best_iou > iou_thr && !gt_matched[static_cast<std::size_t>(best)]) {
      gt_matched[static_cast<std::size_t>(best)] = 1;
      ++out.correct;
      continue;
    }
    bool other_class_overlap = false;
    for (std::size_t g = 0; g < gts.size() && !other_class_overlap; ++g) {
      if (gts[g].video_id != d.video_id || gts[g].frame != d.frame) continue;
      if (gts[g].class_id == d.class_id) continue;
      if (iou(d.box, gts[g].box) > iou_thr) other_class_overlap = true;
    }
    if (other_class_overlap) {
      ++out.e_class;
      continue;
    }
    if (class_here) {
      ++out.e_loc;
      continue;
    }
    ++out.e_other;
  }

  for (const std::uint8_t m : gt_matched)
    if (!m) ++out.missed;
  return out;
}

std::vector<FrameGt> frame_gts_from(const VideoAnnotations& video, int video_id) {
  std::vector<FrameGt> out;
  for (const Instance& inst : video.instances)
    for (int f = inst.start_frame; f <= inst.end_frame(); ++f)
      out.push_back(FrameGt{video_id, f, inst.class_id, inst.box_at(f)});
  return out;
}

std::vector<TubeGt> tube_gts_from(const VideoAnnotations& video, int video_id) {
  std::vector<TubeGt> out;
  for (const Instance& inst : video.instances) out.push_back(TubeGt{video_id, inst});
  return out;
}

std::vector<FrameDet> frame_dets_from(std::span<const Tube> tubes, int video_id) {
  std::vector<FrameDet> out;
  for (const Tube& t : tubes)
    for (int f = t.start_frame; f <= t.end_frame(); ++f)
      out.push_back(FrameDet{video_id, f, t.class_id, t.score, t.box_at(f)});
  return out;
}

std::vector<TubeDet> tube_dets_from(std::span<const Tube> tubes, int video_id) {
  std::vector<TubeDet> out;
  for (const Tube& t : tubes) out.push_back(TubeDet{video_id, t});
  return out;
}

}  // namespace tubekit
