// Acceptance suite: nine end-to-end checks of the tubelet toolkit, each
// printed as one [PASS]/[FAIL] line with its wall time. Numeric tolerances
// are pinned next to each check. Exit status 0 only when every criterion
// passes. --cli <path> points at the command-line binary (criterion 9).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "tubekit/decoder.hpp"
#include "tubekit/encoder.hpp"
#include "tubekit/evaluator.hpp"
#include "tubekit/gradcheck.hpp"
#include "tubekit/linker.hpp"
#include "tubekit/losses.hpp"
#include "tubekit/synthgen.hpp"
#include "tubekit/tensor_io.hpp"

namespace fs = std::filesystem;
using namespace tubekit;

namespace {

// ---------------------------------------------------------------------------
// Harness
// ---------------------------------------------------------------------------

struct Context {
  std::string cli_path;
  std::ostringstream detail;

  void note(const char* text) { detail << text; }

  template <typename... Args>
  void note(const char* fmt, Args... args) {
    char buf[512];
    std::snprintf(buf, sizeof(buf), fmt, args...);
    detail << buf;
  }
};

bool expect(Context& ctx, bool cond, const std::string& what) {
  if (!cond) ctx.detail << " EXPECT FAILED: " << what << ";";
  return cond;
}

std::uint64_t mix_seed(std::uint64_t base, std::uint64_t index, std::uint64_t salt) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ull * (index + 1) + salt * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// ---------------------------------------------------------------------------
// Criterion 1: analytic gradients match central finite differences.
// ---------------------------------------------------------------------------

bool criterion_gradients(Context& ctx) {
  const GridSpec spec = GridSpec::make(7, 288, 288, 4, 24);
  constexpr double kTol = 1e-4;         // pinned: max relative error
  constexpr int kMaps = 2;
  constexpr int kProbesPerMap = 128;    // pinned: >= 100 probed cells per map

  const GradCheckReport center = gradcheck_center_loss(2024, spec, kMaps, kProbesPerMap);
  const GradCheckReport movement = gradcheck_movement_loss(2025, spec, kMaps, kProbesPerMap);
  const GradCheckReport box = gradcheck_box_loss(2026, spec, kMaps, kProbesPerMap);

  ctx.note("center=%.2e movement=%.2e box=%.2e probes=%d/%d/%d", center.max_rel_err,
           movement.max_rel_err, box.max_rel_err, center.probes, movement.probes,
           box.probes);

  bool ok = true;
  ok &= expect(ctx, center.probes >= kMaps * 100, "center probe count");
  ok &= expect(ctx, movement.probes >= kMaps * 100, "movement probe count");
  ok &= expect(ctx, box.probes >= kMaps * 100, "box probe count");
  ok &= expect(ctx, center.max_rel_err < kTol, "center gradient error < 1e-4");
  ok &= expect(ctx, movement.max_rel_err < kTol, "movement gradient error < 1e-4");
  ok &= expect(ctx, box.max_rel_err < kTol, "box gradient error < 1e-4");
  return ok;
}

// ---------------------------------------------------------------------------
// Criterion 2: losses evaluated at the ground truth itself.
// ---------------------------------------------------------------------------

bool criterion_loss_at_truth(Context& ctx) {
  constexpr double kCenterTol = 1e-3;  // pinned: clamped focal loss at truth
  double worst_center = 0.0;
  double worst_movement = 0.0;
  double worst_box = 0.0;

  for (std::uint64_t seed = 11; seed <= 13; ++seed) {
    SceneSpec sspec;
    sspec.seed = seed;
    const VideoAnnotations video = generate_scene(sspec);
    const GridSpec spec = GridSpec::make(7, sspec.width, sspec.height, 4,
                                         sspec.num_classes);
    for (int ws = 0; ws + spec.clip_len <= video.num_frames; ++ws) {
      const WindowMaps maps = render_perfect_maps(video.instances, ws, spec);
      const ClipTargets targets = encode_clip(video.instances, ws, spec);
      const int n = std::max(1, targets.count());

      // The center branch's perfect prediction is the loss minimizer: 1 at
      // each instance anchor, 0 elsewhere. (The gaussian-valued gt cells are
      // penalty weights, not regression targets.)
      DenseMap center_pred(spec.grid_h(), spec.grid_w(), spec.num_classes);
      for (int i = 0; i < targets.count(); ++i) {
        const Instance& inst =
            video.instances[static_cast<std::size_t>(targets.instance_ids[i])];
        const GridPoint a = targets.movement[static_cast<std::size_t>(i)].anchor;
        center_pred.at(a.x, a.y, inst.class_id) = 1.0;
      }

      const LossGrad lc = center_focal_loss(center_pred, targets.center_heatmap,
                                            2.0, 4.0, n);
      const LossGrad lm = movement_loss(maps.movement, targets.movement);
      const ClipLossGrad lb = box_loss(maps.sizes, targets.sizes);

      worst_center = std::max(worst_center, lc.value);
      worst_movement = std::max(worst_movement, std::abs(lm.value));
      worst_box = std::max(worst_box, std::abs(lb.value));
    }
  }

  ctx.note("center<=%.2e movement=%g box=%g", worst_center, worst_movement, worst_box);
  bool ok = true;
  ok &= expect(ctx, worst_movement == 0.0, "movement loss exactly 0 at truth");
  ok &= expect(ctx, worst_box == 0.0, "box loss exactly 0 at truth");
  ok &= expect(ctx, worst_center < kCenterTol, "center loss < 1e-3 at truth");
  return ok;
}

// ---------------------------------------------------------------------------
// Criterion 3: extract_peaks equals a brute-force 8-neighbor scan.
// ---------------------------------------------------------------------------

std::vector<Peak> brute_force_peaks(const DenseMap& hm, int max_peaks) {
  std::vector<Peak> all;
  for (int c = 0; c < hm.channels(); ++c)
    for (int y = 0; y < hm.grid_h(); ++y)
      for (int x = 0; x < hm.grid_w(); ++x) {
        const double v = hm.at(x, y, c);
        bool is_peak = true;
        for (int dy = -1; dy <= 1 && is_peak; ++dy)
          for (int dx = -1; dx <= 1 && is_peak; ++dx) {
            if (dx == 0 && dy == 0) continue;
            const int nx = x + dx, ny = y + dy;
            if (!hm.in_grid(nx, ny)) continue;
            if (hm.at(nx, ny, c) > v) is_peak = false;
          }
        if (is_peak) all.push_back(Peak{x, y, c, v});
      }
  std::sort(all.begin(), all.end(), [](const Peak& a, const Peak& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.class_id != b.class_id) return a.class_id < b.class_id;
    if (a.y != b.y) return a.y < b.y;
    return a.x < b.x;
  });
  if (static_cast<int>(all.size()) > max_peaks)
    all.resize(static_cast<std::size_t>(max_peaks));
  return all;
}

bool criterion_decoder_oracle(Context& ctx) {
  constexpr int kMapsCount = 1000;
  constexpr int kMaxPeaks = 100;
  int mismatches = 0;

  for (int i = 0; i < kMapsCount; ++i) {
    std::mt19937_64 eng(3000u + static_cast<std::uint64_t>(i));
    DenseMap hm(72, 72, 24);
    for (double& v : hm.data())
      v = static_cast<double>(eng() >> 11) * 0x1.0p-53;
    // Force plateau ties so the >= rule and tie ordering are exercised.
    for (int t = 0; t < 64; ++t) {
      const int x = static_cast<int>(eng() % 71);
      const int y = static_cast<int>(eng() % 71);
      const int c = static_cast<int>(eng() % 24);
      hm.at(x + 1, y, c) = hm.at(x, y, c);
      if (t % 2 == 0) hm.at(x, y + 1, c) = hm.at(x, y, c);
    }

    const std::vector<Peak> fast = extract_peaks(hm, kMaxPeaks);
    const std::vector<Peak> slow = brute_force_peaks(hm, kMaxPeaks);
    bool same = fast.size() == slow.size();
    for (std::size_t k = 0; same && k < fast.size(); ++k)
      same = fast[k].x == slow[k].x && fast[k].y == slow[k].y &&
             fast[k].class_id == slow[k].class_id && fast[k].score == slow[k].score;
    if (!same) {
      ++mismatches;
      if (mismatches == 1) ctx.note("first mismatch at map %d ", i);
    }
  }

  ctx.note("%d/%d maps identical", kMapsCount - mismatches, kMapsCount);
  return expect(ctx, mismatches == 0, "peak lists exactly equal on every map");
}

// ---------------------------------------------------------------------------
// Criteria 4 + 5 share the 50-scene suite.
// ---------------------------------------------------------------------------

struct SceneRun {
  VideoAnnotations video;
  std::vector<Tubelet> tubelets;
  std::vector<Tube> offline_tubes;
};

SceneRun run_scene(std::uint64_t seed, const GridSpec& spec) {
  SceneRun run;
  SceneSpec sspec;
  sspec.seed = seed;  // defaults: linear motion, 3 separated instances
  run.video = generate_scene(sspec);
  for (int ws = 0; ws + spec.clip_len <= run.video.num_frames; ++ws) {
    const WindowMaps maps = render_perfect_maps(run.video.instances, ws, spec);
    for (Tubelet& t : decode_tubelets(maps, spec, 100, DecodeMode::full_movement))
      run.tubelets.push_back(std::move(t));
  }
  run.offline_tubes = link_video(run.tubelets, spec, LinkParams{});
  return run;
}

bool criterion_closed_loop(Context& ctx) {
  const GridSpec spec = GridSpec::make(7, 288, 288, 4, 24);
  constexpr double kCoordTolPx = 4.0;  // pinned: within one stride (R = 4)
  constexpr int kScenes = 50;

  std::vector<TubeDet> all_dets;
  std::vector<TubeGt> all_gts;
  int bad_recoveries = 0;

  for (int s = 0; s < kScenes; ++s) {
    const SceneRun run = run_scene(static_cast<std::uint64_t>(s + 1), spec);

    // Every instance must be recovered by some same-class tubelet in every
    // window, each coordinate within kCoordTolPx.
    for (int ws = 0; ws + spec.clip_len <= run.video.num_frames; ++ws) {
      for (const Instance& inst : run.video.instances) {
        bool recovered = false;
        for (const Tubelet& t : run.tubelets) {
          if (t.start_frame != ws || t.class_id != inst.class_id) continue;
          bool close = true;
          for (int j = 0; j < spec.clip_len && close; ++j) {
            const BBox& d = t.boxes[static_cast<std::size_t>(j)];
            const BBox& g = inst.box_at(ws + j);
            close = std::abs(d.x1 - g.x1) <= kCoordTolPx &&
                    std::abs(d.y1 - g.y1) <= kCoordTolPx &&
                    std::abs(d.x2 - g.x2) <= kCoordTolPx &&
                    std::abs(d.y2 - g.y2) <= kCoordTolPx;
          }
          if (close) {
            recovered = true;
            break;
          }
        }
        if (!recovered) ++bad_recoveries;
      }
    }

    for (TubeDet& d : tube_dets_from(run.offline_tubes, s)) all_dets.push_back(std::move(d));
    for (TubeGt& g : tube_gts_from(run.video, s)) all_gts.push_back(std::move(g));
  }

  const MapResult pooled = video_map_at(all_dets, all_gts, 0.5);
  ctx.note("scenes=%d unrecovered=%d video-mAP@0.5=%.6f", kScenes, bad_recoveries,
           pooled.mean_ap);
  bool ok = true;
  ok &= expect(ctx, bad_recoveries == 0, "all boxes recovered within R pixels");
  ok &= expect(ctx, pooled.mean_ap >= 1.0 - 1e-9, "pooled video-mAP@0.5 == 1.0");
  return ok;
}

std::string tubes_to_text(const std::vector<Tube>& tubes) {
  std::ostringstream out;
  char buf[160];
  for (const Tube& t : tubes) {
    std::snprintf(buf, sizeof(buf), "tube c=%d s=%.17g f=%d:", t.class_id, t.score,
                  t.start_frame);
    out << buf;
    for (const BBox& b : t.boxes) {
      std::snprintf(buf, sizeof(buf), " [%.17g %.17g %.17g %.17g]", b.x1, b.y1, b.x2,
                    b.y2);
      out << buf;
    }
    out << "\n";
  }
  return out.str();
}

bool criterion_stream_offline(Context& ctx) {
  const GridSpec spec = GridSpec::make(7, 288, 288, 4, 24);
  constexpr int kScenes = 50;
  int mismatches = 0;

  for (int s = 0; s < kScenes; ++s) {
    const SceneRun run = run_scene(static_cast<std::uint64_t>(s + 1), spec);

    StreamParams params;  // defaults match the offline run above
    StreamSession session(spec, params, [&](int ws) {
      WindowMaps maps = render_perfect_maps(run.video.instances, ws, spec);
      return std::make_pair(std::move(maps.center), std::move(maps.movement));
    });
    std::vector<Tube> online;
    for (int f = 0; f < run.video.num_frames; ++f) {
      for (Tube& t : session.push_frame(render_size_map(run.video.instances, f, spec)))
        online.push_back(std::move(t));
    }
    for (Tube& t : session.finish()) online.push_back(std::move(t));

    if (tubes_to_text(online) != tubes_to_text(run.offline_tubes)) {
      ++mismatches;
      if (mismatches == 1) ctx.note("first mismatch at scene %d ", s + 1);
    }
  }

  ctx.note("%d/%d scenes byte-identical", kScenes - mismatches, kScenes);
  return expect(ctx, mismatches == 0, "stream equals offline on every scene");
}

// ---------------------------------------------------------------------------
// Criterion 6: AP against an independent brute-force PR implementation.
// ---------------------------------------------------------------------------

double brute_force_ap(const std::vector<FrameDet>& dets, const std::vector<FrameGt>& gts,
                      double iou_thr) {
  // Independent matcher: score order (descending; scores are distinct by
  // construction). Each detection is judged against its highest-IoU ground
  // truth over ALL ground truths; it counts as a true positive only when
  // that IoU is strictly above the threshold and that particular GT is still
  // unmatched. There is no fallback to a lower-IoU unmatched GT.
  std::vector<std::size_t> order(dets.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dets[a].score > dets[b].score;
  });

  std::vector<bool> taken(gts.size(), false);
  std::vector<bool> tp(order.size(), false);
  for (std::size_t k = 0; k < order.size(); ++k) {
    const FrameDet& d = dets[order[k]];
    double best = 0.0;
    std::size_t best_g = gts.size();
    for (std::size_t g = 0; g < gts.size(); ++g) {
      const double v = iou(d.box, gts[g].box);
      if (v > best) {
        best = v;
        best_g = g;
      }
    }
    if (best_g < gts.size() && best > iou_thr && !taken[best_g]) {
      taken[best_g] = true;
      tp[k] = true;
    }
  }

  // All-point interpolation via a backward running max of precision.
  const std::size_t n = order.size();
  if (n == 0 || gts.empty()) return 0.0;
  std::vector<double> precision(n), recall(n);
  int cum = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (tp[k]) ++cum;
    precision[k] = static_cast<double>(cum) / static_cast<double>(k + 1);
    recall[k] = static_cast<double>(cum) / static_cast<double>(gts.size());
  }
  double ap = 0.0, running_max = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    running_max = std::max(running_max, precision[k]);
    const double r_lo = k == 0 ? 0.0 : recall[k - 1];
    ap += (recall[k] - r_lo) * running_max;
  }
  return ap;
}

bool criterion_evaluator_oracle(Context& ctx) {
  constexpr double kTol = 1e-12;  // pinned
  constexpr int kInstances = 500;

  // The worked example: (TP, FP, TP) over two ground truths.
  const double worked =
      average_precision({{0.9, true}, {0.8, false}, {0.7, true}}, 2);
  bool ok = expect(ctx, std::abs(worked - 5.0 / 6.0) <= kTol,
                   "worked example AP == 0.8333...");

  double worst = 0.0;
  for (int i = 0; i < kInstances; ++i) {
    std::mt19937_64 eng(6000u + static_cast<std::uint64_t>(i));
    auto u01 = [&] { return static_cast<double>(eng() >> 11) * 0x1.0p-53; };

    const int num_gt = 1 + static_cast<int>(eng() % 10);
    const int num_det = static_cast<int>(eng() % 21);

    std::vector<FrameGt> gts;
    for (int g = 0; g < num_gt; ++g) {
      const double x = u01() * 80.0, y = u01() * 80.0;
      const double w = 8.0 + u01() * 32.0, h = 8.0 + u01() * 32.0;
      gts.push_back({0, 0, 0, BBox{x, y, x + w, y + h}});
    }

    std::set<double> used_scores;
    std::vector<FrameDet> dets;
    for (int d = 0; d < num_det; ++d) {
      double score = u01();
      while (!used_scores.insert(score).second) score = u01();
      BBox box;
      if (d % 2 == 0 && num_gt > 0) {
        const BBox& g = gts[static_cast<std::size_t>(d % num_gt)].box;
        const double jx = (u01() - 0.5) * 20.0, jy = (u01() - 0.5) * 20.0;
        box = BBox{g.x1 + jx, g.y1 + jy, g.x2 + jx, g.y2 + jy};
      } else {
        const double x = u01() * 100.0, y = u01() * 100.0;
        const double w = 8.0 + u01() * 32.0, h = 8.0 + u01() * 32.0;
        box = BBox{x, y, x + w, y + h};
      }
      dets.push_back({0, 0, 0, score, box});
    }

    const MapResult r = frame_map(dets, gts, 0.5);
    const double brute = brute_force_ap(dets, gts, 0.5);
    worst = std::max(worst, std::abs(r.mean_ap - brute));
  }

  ctx.note("worked=%.12f max|ap-brute|=%.2e over %d instances", worked, worst,
           kInstances);
  ok &= expect(ctx, worst <= kTol, "AP matches brute force to 1e-12");
  return ok;
}

// ---------------------------------------------------------------------------
// Criterion 7: ablation orderings over a >= 20 seed suite.
// ---------------------------------------------------------------------------

double suite_video_map(const std::vector<TubeDet>& dets, const std::vector<TubeGt>& gts) {
  return video_map_at(dets, gts, 0.5).mean_ap;
}

bool criterion_ablations(Context& ctx) {
  constexpr int kSeeds = 20;
  const GridSpec spec7 = GridSpec::make(7, 288, 288, 4, 24);
  bool ok = true;

  // --- Mode ordering: fast linear motion, sparse supervision maps. The
  // movement branch is the only way to track the trajectory, so
  // no_movement and semi_movement collapse while full_movement stays exact.
  {
    std::vector<TubeDet> dets_no, dets_semi, dets_full;
    std::vector<TubeGt> gts;
    for (int s = 0; s < kSeeds; ++s) {
      SceneSpec sspec;
      sspec.seed = static_cast<std::uint64_t>(100 + s);
      sspec.speed_min = 4.0;
      sspec.speed_max = 4.0;
      const VideoAnnotations video = generate_scene(sspec);
      for (TubeGt& g : tube_gts_from(video, s)) gts.push_back(std::move(g));

      std::vector<Tubelet> tl_no, tl_semi, tl_full;
      for (int ws = 0; ws + spec7.clip_len <= video.num_frames; ++ws) {
        const WindowMaps maps = render_perfect_maps(video.instances, ws, spec7);
        for (Tubelet& t : decode_tubelets(maps, spec7, 100, DecodeMode::no_movement))
          tl_no.push_back(std::move(t));
        for (Tubelet& t : decode_tubelets(maps, spec7, 100, DecodeMode::semi_movement))
          tl_semi.push_back(std::move(t));
        for (Tubelet& t : decode_tubelets(maps, spec7, 100, DecodeMode::full_movement))
          tl_full.push_back(std::move(t));
      }
      for (TubeDet& d : tube_dets_from(link_video(tl_no, spec7, LinkParams{}), s))
        dets_no.push_back(std::move(d));
      for (TubeDet& d : tube_dets_from(link_video(tl_semi, spec7, LinkParams{}), s))
        dets_semi.push_back(std::move(d));
      for (TubeDet& d : tube_dets_from(link_video(tl_full, spec7, LinkParams{}), s))
        dets_full.push_back(std::move(d));
    }

    const double map_no = suite_video_map(dets_no, gts);
    const double map_semi = suite_video_map(dets_semi, gts);
    const double map_full = suite_video_map(dets_full, gts);
    ctx.note("modes no=%.4f semi=%.4f full=%.4f; ", map_no, map_semi, map_full);
    ok &= expect(ctx, map_no <= map_semi + 1e-9, "no_movement <= semi_movement");
    ok &= expect(ctx, map_semi <= map_full + 1e-9, "semi_movement <= full_movement");
    ok &= expect(ctx, map_no + 0.25 < map_full, "movement branch separates the suite");
  }

  // --- Clip length ordering under prediction noise: single-frame clips
  // cannot average out per-window jitter, and their one-frame fragments
  // barely overlap the full-length ground-truth tubes.
  {
    double map_k1 = 0.0, map_k7 = 0.0;
    for (const int k : {1, 7}) {
      const GridSpec spec = GridSpec::make(k, 288, 288, 4, 24);
      std::vector<TubeDet> dets;
      std::vector<TubeGt> gts;
      for (int s = 0; s < kSeeds; ++s) {
        SceneSpec sspec;
        sspec.seed = static_cast<std::uint64_t>(200 + s);
        const VideoAnnotations video = generate_scene(sspec);
        for (TubeGt& g : tube_gts_from(video, s)) gts.push_back(std::move(g));

        // Per-frame size maps are shared by every window covering the frame;
        // noise is applied once per frame, per-window noise on the heatmap.
        std::vector<DenseMap> size_maps;
        for (int f = 0; f < video.num_frames; ++f) {
          DenseMap sm = render_size_map(video.instances, f, spec);
          add_gaussian_noise(sm, 1.0, mix_seed(sspec.seed, static_cast<std::uint64_t>(f), 2),
                             0.0, std::numeric_limits<double>::infinity());
          size_maps.push_back(std::move(sm));
        }

        std::vector<Tubelet> tubelets;
        for (int ws = 0; ws + spec.clip_len <= video.num_frames; ++ws) {
          WindowMaps maps = render_perfect_maps(video.instances, ws, spec);
          add_gaussian_noise(maps.center, 0.15,
                             mix_seed(sspec.seed, static_cast<std::uint64_t>(ws), 0), 0.0,
                             1.0);
          maps.sizes.assign(size_maps.begin() + ws,
                            size_maps.begin() + ws + spec.clip_len);
          for (Tubelet& t : decode_tubelets(maps, spec, 100, DecodeMode::full_movement))
            tubelets.push_back(std::move(t));
        }
        for (TubeDet& d : tube_dets_from(link_video(tubelets, spec, LinkParams{}), s))
          dets.push_back(std::move(d));
      }
      (k == 1 ? map_k1 : map_k7) = suite_video_map(dets, gts);
    }
    ctx.note("K=1 %.4f vs K=7 %.4f", map_k1, map_k7);
    ok &= expect(ctx, map_k1 + 0.1 < map_k7, "K=1 strictly below K=7");
  }

  return ok;
}

// ---------------------------------------------------------------------------
// Criterion 8: injected faults raise their own error category monotonically.
// ---------------------------------------------------------------------------

bool criterion_error_analysis(Context& ctx) {
  // Three static same-frame instances, classes 0/1/2, frames 6..17 of 24, so
  // frames 0..5 and 18..23 are outside every temporal extent.
  const std::vector<BBox> anchors = {
      {20, 20, 60, 60}, {120, 120, 160, 160}, {220, 20, 260, 60}};
  std::vector<FrameGt> gts;
  for (int f = 6; f <= 17; ++f)
    for (int c = 0; c < 3; ++c) gts.push_back({0, f, c, anchors[static_cast<std::size_t>(c)]});

  std::vector<FrameDet> baseline;
  for (int f = 6; f <= 17; ++f)
    for (int c = 0; c < 3; ++c)
      baseline.push_back({0, f, c,
                          0.9 - 1e-4 * static_cast<double>(baseline.size()),
                          anchors[static_cast<std::size_t>(c)]});

  const ErrorBreakdown clean = error_analysis(baseline, gts, 0.5);
  bool ok = expect(ctx, clean.correct == clean.num_dets && clean.missed == 0,
                   "baseline is all-correct");

  const std::vector<int> fault_counts = {4, 8, 12};  // three monotone levels

  auto fractions_for = [&](const char* kind) {
    std::vector<double> fractions;
    for (const int k : fault_counts) {
      std::vector<FrameDet> dets = baseline;
      if (std::string(kind) == "class") {
        for (int i = 0; i < k; ++i)
          dets[static_cast<std::size_t>(i)].class_id =
              (dets[static_cast<std::size_t>(i)].class_id + 1) % 3;
      } else if (std::string(kind) == "loc") {
        for (int i = 0; i < k; ++i) {
          BBox& b = dets[static_cast<std::size_t>(i)].box;
          const double shift = 0.5 * b.width();  // IoU drops to 1/3 < 0.5
          b.x1 += shift;
          b.x2 += shift;
        }
      } else if (std::string(kind) == "time") {
        for (int i = 0; i < k; ++i)
          dets[static_cast<std::size_t>(i)].frame = i % 6;  // before every extent
      } else {  // "missed"
        dets.erase(dets.begin(), dets.begin() + k);
      }
      const ErrorBreakdown e = error_analysis(dets, gts, 0.5);
      if (std::string(kind) == "class") fractions.push_back(e.class_fraction());
      else if (std::string(kind) == "loc") fractions.push_back(e.loc_fraction());
      else if (std::string(kind) == "time") fractions.push_back(e.time_fraction());
      else fractions.push_back(e.missed_fraction());
    }
    return fractions;
  };

  for (const char* kind : {"class", "loc", "time", "missed"}) {
    const std::vector<double> f = fractions_for(kind);
    ctx.note("%s=%.3f/%.3f/%.3f ", kind, f[0], f[1], f[2]);
    ok &= expect(ctx, f[0] > 0.0, std::string(kind) + " level 1 positive");
    ok &= expect(ctx, f[0] < f[1] && f[1] < f[2],
                 std::string(kind) + " fraction strictly monotone");
  }
  return ok;
}

// ---------------------------------------------------------------------------
// Criterion 9: byte-identical CLI reruns, including parallel workers.
// ---------------------------------------------------------------------------

int run_cli(const std::string& cli, const std::string& args) {
  const std::string cmd = "'" + cli + "' " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return status;
}

bool read_bytes(const fs::path& p, std::string& out) {
  std::ifstream in(p, std::ios::binary);
  if (!in.good()) return false;
  std::ostringstream ss;
  ss << in.rdbuf();
  out = ss.str();
  return true;
}

bool trees_identical(const fs::path& a, const fs::path& b, bool skip_config,
                     std::string& why) {
  auto listing = [&](const fs::path& root) {
    std::vector<fs::path> rel;
    for (const auto& e : fs::recursive_directory_iterator(root))
      if (e.is_regular_file()) {
        const fs::path r = fs::relative(e.path(), root);
        if (skip_config && r.filename() == "config.json") continue;
        rel.push_back(r);
      }
    std::sort(rel.begin(), rel.end());
    return rel;
  };
  const std::vector<fs::path> la = listing(a), lb = listing(b);
  if (la != lb) {
    why = "file sets differ";
    return false;
  }
  for (const fs::path& r : la) {
    std::string ba, bb;
    if (!read_bytes(a / r, ba) || !read_bytes(b / r, bb)) {
      why = "unreadable " + r.string();
      return false;
    }
    if (ba != bb) {
      why = "bytes differ in " + r.string();
      return false;
    }
  }
  return true;
}

bool criterion_cli_determinism(Context& ctx) {
  if (ctx.cli_path.empty()) {
    ctx.note("no --cli path given");
    return false;
  }
  const fs::path base =
      fs::temp_directory_path() /
      ("tubekit_accept_" +
       std::to_string(std::chrono::steady_clock::now().time_since_epoch().count() %
                      1000000));
  fs::remove_all(base);
  fs::create_directories(base);

  const std::string cli = ctx.cli_path;
  const std::string D1 = (base / "synth").string();
  const std::string DW = (base / "synth_w1").string();

  struct Step {
    std::string name;
    std::string args;  // identical for both runs, including --out
    fs::path out;      // directory holding every artifact the command writes
  };

  // synth runs first; later commands consume its outputs. Each step is run
  // twice with the exact same command line: run, snapshot the output tree,
  // wipe it, run again, and require the rerun to reproduce the snapshot
  // byte for byte (config.json included).
  std::vector<Step> steps;
  auto add_step = [&](const std::string& name, const std::string& args_fmt) {
    const std::string o = (base / name).string();
    std::string a = args_fmt;
    const std::string marker = "{OUT}";
    a.replace(a.find(marker), marker.size(), o);
    steps.push_back({name, a, base / name});
  };

  add_step("synth", "synth --seed 5 --workers 4 --out {OUT}");
  add_step("encode", "encode --annotations " + D1 + "/annotations.json --out {OUT}");
  add_step("gradcheck",
           "gradcheck --maps 1 --probes 16 --width 96 --height 96 --out "
           "{OUT}/report.json");
  add_step("decode", "decode --maps " + D1 + " --workers 4 --out {OUT}/tubelets.jsonl");
  add_step("link", "link --tubelets " + base.string() +
                       "/decode/tubelets.jsonl --out {OUT}/tubes.json");
  add_step("stream", "stream --maps " + D1 + " --out {OUT}/tubes.json");
  add_step("eval", "eval --tubes " + base.string() + "/link/tubes.json --annotations " +
                       D1 + "/annotations.json --out {OUT}/metrics.json");
  add_step("pipeline", "pipeline --seed 5 --workers 4 --out {OUT}");
  add_step("overlay", "overlay --annotations " + D1 + "/annotations.json --tubes " +
                          base.string() + "/link/tubes.json --out {OUT}");

  bool ok = true;
  for (const Step& step : steps) {
    const fs::path snap = base / (step.name + ".snap");
    fs::create_directories(step.out);
    const int s1 = run_cli(cli, step.args);
    if (!expect(ctx, s1 == 0, step.name + " exits 0")) {
      ok = false;
      continue;
    }
    fs::copy(step.out, snap, fs::copy_options::recursive);
    fs::remove_all(step.out);
    fs::create_directories(step.out);
    const int s2 = run_cli(cli, step.args);
    if (!expect(ctx, s2 == 0, step.name + " rerun exits 0")) {
      ok = false;
      continue;
    }
    std::string why;
    if (!trees_identical(step.out, snap, false, why)) {
      expect(ctx, false, step.name + " reruns byte-identical (" + why + ")");
      ok = false;
    }
  }

  // Worker-count invariance: one thread and four threads must produce the
  // same bytes (config.json records the flag value, so it is excluded).
  fs::create_directories(DW);
  if (expect(ctx, run_cli(cli, "synth --seed 5 --workers 1 --out " + DW) == 0,
             "synth -j1 exits 0")) {
    std::string why;
    if (!trees_identical(base / "synth", DW, true, why)) {
      expect(ctx, false, "synth workers 1 vs 4 byte-identical (" + why + ")");
      ok = false;
    }
  } else {
    ok = false;
  }
  const std::string PW = (base / "pipeline_w1").string();
  fs::create_directories(PW);
  if (expect(ctx, run_cli(cli, "pipeline --seed 5 --workers 1 --out " + PW) == 0,
             "pipeline -j1 exits 0")) {
    std::string why;
    if (!trees_identical(base / "pipeline", PW, true, why)) {
      expect(ctx, false, "pipeline workers 1 vs 4 byte-identical (" + why + ")");
      ok = false;
    }
  } else {
    ok = false;
  }

  if (ok) ctx.note("9 subcommands rerun identical; workers 1 == 4");
  fs::remove_all(base);
  return ok;
}

}  // namespace

// ---------------------------------------------------------------------------

int main(int argc, char** argv) {
  std::string cli_path;
  for (int i = 1; i + 1 < argc; ++i)
    if (std::string(argv[i]) == "--cli") cli_path = argv[i + 1];

  struct Entry {
    int id;
    const char* name;
    double budget_s;  // per-criterion wall budget, pinned
    bool (*fn)(Context&);
  };
  const std::vector<Entry> entries = {
      {1, "gradient-correctness", 30.0, criterion_gradients},
      {2, "loss-at-truth", 5.0, criterion_loss_at_truth},
      {3, "decoder-oracle", 60.0, criterion_decoder_oracle},
      {4, "closed-loop-recovery", 120.0, criterion_closed_loop},
      {5, "online-offline-equivalence", 60.0, criterion_stream_offline},
      {6, "evaluator-oracle", 30.0, criterion_evaluator_oracle},
      {7, "ablation-directions", 300.0, criterion_ablations},
      {8, "error-analysis-faults", 120.0, criterion_error_analysis},
      {9, "cli-determinism", 0.0, criterion_cli_determinism},
  };

  int failures = 0;
  for (const Entry& e : entries) {
    Context ctx;
    ctx.cli_path = cli_path;
    const auto t0 = std::chrono::steady_clock::now();
    bool ok = false;
    try {
      ok = e.fn(ctx);
    } catch (const std::exception& ex) {
      ctx.detail << " exception: " << ex.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (e.budget_s > 0.0 && secs > e.budget_s) {
      ctx.note(" OVER BUDGET %.0fs", e.budget_s);
      ok = false;
    }
    std::printf("[%s] %d %-28s %s (%.2fs)\n", ok ? "PASS" : "FAIL", e.id, e.name,
                ctx.detail.str().c_str(), secs);
    std::fflush(stdout);
    if (!ok) ++failures;
  }

  if (failures > 0) {
    std::printf("%d of %zu criteria FAILED\n", failures, entries.size());
    return 1;
  }
  std::printf("all %zu criteria passed\n", entries.size());
  return 0;
}
