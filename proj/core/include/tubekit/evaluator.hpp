#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tubekit/geometry.hpp"
#include "tubekit/types.hpp"

namespace tubekit {

/// Spatio-temporal overlap of two tubes: (temporal IoU of the inclusive frame
/// ranges) * (mean spatial IoU over the shared frames). 0 when temporally
/// disjoint.
double tube_iou(int start_a, std::span<const BBox> boxes_a, int start_b,
                std::span<const BBox> boxes_b);
double tube_iou(const Tube& det, const Instance& gt);

/// One scored detection's match outcome, the unit AP is computed from.
struct ScoredMatch {
  double score = 0.0;
  bool tp = false;
};

/// All-point interpolated average precision. Matches are sorted by score
/// descending (ties keep input order); AP is the area under the upper
/// precision envelope of the resulting PR curve. num_gt must be positive.
double average_precision(std::vector<ScoredMatch> matches, int num_gt);

/// Frame-level detection / ground truth, tagged by video for pooled scoring.
struct FrameDet {
  int video_id = 0;
  int frame = 0;
  int class_id = 0;
  double score = 0.0;
  BBox box;
};
struct FrameGt {
  int video_id = 0;
  int frame = 0;
  int class_id = 0;
  BBox box;
};

/// Tube-level detection / ground truth.
struct TubeDet {
  int video_id = 0;
  Tube tube;
};
struct TubeGt {
  int video_id = 0;
  Instance instance;
};

struct ClassAp {
  int class_id = 0;
  double ap = 0.0;
  int num_gt = 0;
  int num_det = 0;
};

/// mAP over the classes present in ground truth (ascending class id);
/// detections of absent classes are ignored.
struct MapResult {
  double mean_ap = 0.0;
  std::vector<ClassAp> per_class;
};

/// Frame-mAP: detections pooled over all frames and videos; a detection can
/// only match a ground-truth box of its own class in its own (video, frame).
/// Matching is greedy in score order against each detection's highest-IoU
/// ground truth; IoU strictly above iou_thr is required.
MapResult frame_map(std::span<const FrameDet> dets, std::span<const FrameGt> gts,
                    double iou_thr = 0.5, int workers = 1);

/// Video-mAP at a single tube-IoU threshold.
MapResult video_map_at(std::span<const TubeDet> dets, std::span<const TubeGt> gts,
                       double iou_thr, int workers = 1);

struct VideoMapRow {
  double threshold = 0.0;
  MapResult result;
};

/// Video-mAP at a list of thresholds plus the 0.5:0.95 integrated score
/// (mean over thresholds 0.50, 0.55, ..., 0.95).
struct VideoMapTable {
  std::vector<VideoMapRow> rows;
  MapResult integrated;
};

VideoMapTable video_map(std::span<const TubeDet> dets, std::span<const TubeGt> gts,
                        std::vector<double> thresholds = {0.2, 0.5, 0.75},
                        int workers = 1);

/// Five-way diagnosis of frame-level detections (precedence: time error,
/// correct, class error, localization error, other), plus missed ground
/// truths:
///  - e_time: the detection's class occurs somewhere in its video but not in
///    its frame.
///  - correct: IoU > iou_thr with an unmatched same-class ground-truth box.
///  - e_class: IoU > iou_thr with a ground-truth box of another class.
///  - e_loc: same-class ground truth exists in the frame but no match.
///  - e_other: everything else.
/// Detections below score_thr are ignored. Fractions are over counted
/// detections; missed_fraction is over all ground-truth boxes.
struct ErrorBreakdown {
  std::int64_t num_dets = 0;
  std::int64_t num_gts = 0;
  std::int64_t correct = 0;
  std::int64_t e_class = 0;
  std::int64_t e_loc = 0;
  std::int64_t e_time = 0;
  std::int64_t e_other = 0;
  std::int64_t missed = 0;

  double fraction(std::int64_t count) const {
    return num_dets == 0 ? 0.0 : static_cast<double>(count) / static_cast<double>(num_dets);
  }
  double correct_fraction() const { return fraction(correct); }
  double class_fraction() const { return fraction(e_class); }
  double loc_fraction() const { return fraction(e_loc); }
  double time_fraction() const { return fraction(e_time); }
  double other_fraction() const { return fraction(e_other); }
  double missed_fraction() const {
    return num_gts == 0 ? 0.0 : static_cast<double>(missed) / static_cast<double>(num_gts);
  }
};

ErrorBreakdown error_analysis(std::span<const FrameDet> dets,
                              std::span<const FrameGt> gts, double iou_thr = 0.5,
                              double score_thr = 0.0);

/// Adapters between video annotations / tubes and evaluator inputs.
std::vector<FrameGt> frame_gts_from(const VideoAnnotations& video, int video_id);
std::vector<TubeGt> tube_gts_from(const VideoAnnotations& video, int video_id);
std::vector<FrameDet> frame_dets_from(std::span<const Tube> tubes, int video_id);
std::vector<TubeDet> tube_dets_from(std::span<const Tube> tubes, int video_id);

}  // namespace tubekit
