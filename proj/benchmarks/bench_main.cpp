// Microbenchmarks for the hot paths: ground-truth encoding, the center focal
// loss (value + gradient), peak extraction, window decoding, online linking,
// and video-mAP evaluation. Fixtures are built once, outside the timed loops,
// from deterministic synthetic scenes.

#include <benchmark/benchmark.h>

#include <algorithm>
#include <utility>
#include <vector>

#include <tubekit/decoder.hpp>
#include <tubekit/encoder.hpp>
#include <tubekit/evaluator.hpp>
#include <tubekit/linker.hpp>
#include <tubekit/losses.hpp>
#include <tubekit/synthgen.hpp>

using namespace tubekit;

namespace {

const GridSpec& bench_spec() {
  static const GridSpec spec = GridSpec::make(7, 288, 288, 4, 24);
  return spec;
}

const VideoAnnotations& bench_scene() {
  static const VideoAnnotations video = [] {
    SceneSpec spec;
    spec.seed = 42;
    return generate_scene(spec);
  }();
  return video;
}

const WindowMaps& bench_maps() {
  static const WindowMaps maps =
      render_perfect_maps(bench_scene().instances, 0, bench_spec());
  return maps;
}

// All tubelets of the benchmark scene, decoded window by window.
const std::vector<Tubelet>& bench_tubelets() {
  static const std::vector<Tubelet> tubelets = [] {
    std::vector<Tubelet> all;
    const GridSpec& spec = bench_spec();
    const VideoAnnotations& video = bench_scene();
    for (int ws = 0; ws + spec.clip_len <= video.num_frames; ++ws) {
      const WindowMaps maps = render_perfect_maps(video.instances, ws, spec);
      for (Tubelet& t :
           decode_tubelets(maps, spec, 100, DecodeMode::full_movement))
        all.push_back(std::move(t));
    }
    return all;
  }();
  return tubelets;
}

struct EvalFixture {
  std::vector<TubeDet> dets;
  std::vector<TubeGt> gts;
};

// Pooled detections / ground truths over several scenes for the mAP timing.
const EvalFixture& bench_eval_fixture() {
  static const EvalFixture fixture = [] {
    EvalFixture f;
    const GridSpec& spec = bench_spec();
    for (int video_id = 0; video_id < 8; ++video_id) {
      SceneSpec sspec;
      sspec.seed = static_cast<std::uint64_t>(300 + video_id);
      const VideoAnnotations video = generate_scene(sspec);
      std::vector<Tubelet> tubelets;
      for (int ws = 0; ws + spec.clip_len <= video.num_frames; ++ws) {
        const WindowMaps maps = render_perfect_maps(video.instances, ws, spec);
        for (Tubelet& t :
             decode_tubelets(maps, spec, 100, DecodeMode::full_movement))
          tubelets.push_back(std::move(t));
      }
      const std::vector<Tube> tubes = link_video(tubelets, spec, LinkParams{});
      for (TubeDet& d : tube_dets_from(tubes, video_id)) f.dets.push_back(std::move(d));
      for (TubeGt& g : tube_gts_from(video, video_id)) f.gts.push_back(std::move(g));
    }
    return f;
  }();
  return fixture;
}

void BM_EncodeClip(benchmark::State& state) {
  const VideoAnnotations& video = bench_scene();
  const GridSpec& spec = bench_spec();
  for (auto _ : state) {
    ClipTargets targets = encode_clip(video.instances, 0, spec);
    benchmark::DoNotOptimize(targets);
  }
}
BENCHMARK(BM_EncodeClip);

void BM_CenterFocalLoss(benchmark::State& state) {
  const GridSpec& spec = bench_spec();
  const ClipTargets targets = encode_clip(bench_scene().instances, 0, spec);
  DenseMap pred = targets.center_heatmap;
  add_gaussian_noise(pred, 0.05, 7, 0.0, 1.0);
  const int n = std::max(1, targets.count());
  for (auto _ : state) {
    LossGrad lg = center_focal_loss(pred, targets.center_heatmap, 2.0, 4.0, n);
    benchmark::DoNotOptimize(lg.value);
    benchmark::DoNotOptimize(lg.grad);
  }
  state.SetItemsProcessed(state.iterations() *
                          static_cast<std::int64_t>(pred.data().size()));
}
BENCHMARK(BM_CenterFocalLoss);

void BM_ExtractPeaks(benchmark::State& state) {
  const DenseMap& heatmap = bench_maps().center;
  for (auto _ : state) {
    std::vector<Peak> peaks = extract_peaks(heatmap, 100);
    benchmark::DoNotOptimize(peaks);
  }
  state.SetItemsProcessed(state.iterations() *
                          static_cast<std::int64_t>(heatmap.data().size()));
}
BENCHMARK(BM_ExtractPeaks);

void BM_DecodeWindow(benchmark::State& state) {
  const WindowMaps& maps = bench_maps();
  const GridSpec& spec = bench_spec();
  for (auto _ : state) {
    std::vector<Tubelet> tubelets =
        decode_tubelets(maps, spec, 100, DecodeMode::full_movement);
    benchmark::DoNotOptimize(tubelets);
  }
}
BENCHMARK(BM_DecodeWindow);

void BM_LinkVideo(benchmark::State& state) {
  const std::vector<Tubelet>& tubelets = bench_tubelets();
  const GridSpec& spec = bench_spec();
  for (auto _ : state) {
    std::vector<Tube> tubes = link_video(tubelets, spec, LinkParams{});
    benchmark::DoNotOptimize(tubes);
  }
  state.SetItemsProcessed(state.iterations() *
                          static_cast<std::int64_t>(tubelets.size()));
}
BENCHMARK(BM_LinkVideo);

void BM_VideoMap(benchmark::State& state) {
  const EvalFixture& fixture = bench_eval_fixture();
  for (auto _ : state) {
    MapResult result = video_map_at(fixture.dets, fixture.gts, 0.5);
    benchmark::DoNotOptimize(result);
  }
  state.SetItemsProcessed(state.iterations() *
                          static_cast<std::int64_t>(fixture.dets.size()));
}
BENCHMARK(BM_VideoMap);

}  // namespace

BENCHMARK_MAIN();
