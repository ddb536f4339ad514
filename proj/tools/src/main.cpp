#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "json_config.hpp"
#include "tool_io.hpp"
#include "tubekit/decoder.hpp"
#include "tubekit/encoder.hpp"
#include "tubekit/evaluator.hpp"
#include "tubekit/gradcheck.hpp"
#include "tubekit/linker.hpp"
#include "tubekit/parallel.hpp"
#include "tubekit/synthgen.hpp"
#include "tubekit/tensor_io.hpp"

namespace {

using namespace tubekit;
namespace fs = std::filesystem;
namespace tool = tubekit::tool;
using nlohmann::json;

constexpr int kExitFailure = 1;     // computation failed (e.g. gradcheck above tolerance)
constexpr int kExitUsage = 2;       // bad command line
constexpr int kExitConfig = 3;      // malformed run config
constexpr int kExitIo = 4;          // file system failure
constexpr int kExitValidation = 5;  // inconsistent or invalid data

/// Missing required options are detected when a command runs (not at parse
/// time) so --print-config works without them.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <typename T>
void require(const T& value, const char* flag) {
  if (value.empty()) throw UsageError(std::string("missing required option ") + flag);
}

/// Splitmix-style mix of (base, index, salt) so per-window and per-frame
/// noise streams never collide or depend on iteration order.
std::uint64_t derived_seed(std::uint64_t base, std::uint64_t index, std::uint64_t salt) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ull * (index * 4 + salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

void write_config_echo(const CLI::App& root, const fs::path& dir) {
  write_file_atomic(dir / "config.json", root.config_to_str(true, false));
}

std::string numbered(const char* prefix, int n, const char* ext) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%s_%06d.%s", prefix, n, ext);
  return buf;
}

// ---------------------------------------------------------------------------
// Shared flag groups
// ---------------------------------------------------------------------------

struct GridCli {
  int clip_len = 7;
  int down_ratio = 4;
  int key_index = -1;

  void add(CLI::App* c) {
    c->add_option("--clip-len", clip_len, "Frames per clip window")->capture_default_str();
    c->add_option("--down-ratio", down_ratio, "Input-to-grid downsampling ratio")
        ->capture_default_str();
    c->add_option("--key-index", key_index,
                  "Key frame index within the clip; -1 selects clip_len/2")
        ->capture_default_str();
  }

  GridSpec make(int width, int height, int num_classes) const {
    if (clip_len >= 1 && clip_len % 2 == 0 && key_index < 0)
      std::fprintf(stderr, "note: even clip length %d; key frame defaults to index %d\n",
                   clip_len, clip_len / 2);
    return GridSpec::make(clip_len, width, height, down_ratio, num_classes, key_index);
  }
};

struct SceneCli {
  SceneSpec cli;  // flag targets; merged over the --scene file by resolve()
  std::string motion_str = "linear";
  std::string scene_file;
  std::vector<std::pair<CLI::Option*, std::function<void(SceneSpec&)>>> appliers;

  void add(CLI::App* c) {
    c->add_option("--scene", scene_file, "Scene spec JSON file; flags override its fields");
    auto on = [this](CLI::Option* o, std::function<void(SceneSpec&)> apply) {
      appliers.emplace_back(o, std::move(apply));
    };
    on(c->add_option("--seed", cli.seed, "Scene RNG seed")->capture_default_str(),
       [this](SceneSpec& s) { s.seed = cli.seed; });
    on(c->add_option("--instances", cli.num_instances, "Instances per scene")
           ->capture_default_str(),
       [this](SceneSpec& s) { s.num_instances = cli.num_instances; });
    on(c->add_option("--motion", motion_str, "Motion model")
           ->check(CLI::IsMember({"static", "linear", "sinusoidal"}))
           ->capture_default_str(),
       [this](SceneSpec& s) { s.motion = motion_from_string(motion_str); });
    on(c->add_option("--video-len", cli.video_len, "Frames per video")->capture_default_str(),
       [this](SceneSpec& s) { s.video_len = cli.video_len; });
    on(c->add_option("--width", cli.width, "Frame width, pixels")->capture_default_str(),
       [this](SceneSpec& s) { s.width = cli.width; });
    on(c->add_option("--height", cli.height, "Frame height, pixels")->capture_default_str(),
       [this](SceneSpec& s) { s.height = cli.height; });
    on(c->add_option("--classes", cli.num_classes, "Number of action classes")
           ->capture_default_str(),
       [this](SceneSpec& s) { s.num_classes = cli.num_classes; });
    on(c->add_option("--box-min", cli.box_min, "Min box edge, pixels")->capture_default_str(),
       [this](SceneSpec& s) { s.box_min = cli.box_min; });
    on(c->add_option("--box-max", cli.box_max, "Max box edge, pixels")->capture_default_str(),
       [this](SceneSpec& s) { s.box_max = cli.box_max; });
    on(c->add_option("--speed-min", cli.speed_min, "Min linear speed, px/frame")
           ->capture_default_str(),
       [this](SceneSpec& s) { s.speed_min = cli.speed_min; });
    on(c->add_option("--speed-max", cli.speed_max, "Max linear speed, px/frame")
           ->capture_default_str(),
       [this](SceneSpec& s) { s.speed_max = cli.speed_max; });
    on(c->add_option("--amplitude-min", cli.amplitude_min, "Min sinusoidal amplitude, px")
           ->capture_default_str(),
       [this](SceneSpec& s) { s.amplitude_min = cli.amplitude_min; });
    on(c->add_option("--amplitude-max", cli.amplitude_max, "Max sinusoidal amplitude, px")
           ->capture_default_str(),
       [this](SceneSpec& s) { s.amplitude_max = cli.amplitude_max; });
    on(c->add_option("--period-min", cli.period_min, "Min sinusoidal period, frames")
           ->capture_default_str(),
       [this](SceneSpec& s) { s.period_min = cli.period_min; });
    on(c->add_option("--period-max", cli.period_max, "Max sinusoidal period, frames")
           ->capture_default_str(),
       [this](SceneSpec& s) { s.period_max = cli.period_max; });
    on(c->add_option("--min-separation", cli.min_separation,
                     "Min distance between instance centers, px")
           ->capture_default_str(),
       [this](SceneSpec& s) { s.min_separation = cli.min_separation; });
  }

  SceneSpec resolve() const {
    SceneSpec s;
    if (!scene_file.empty()) s = read_scene_spec(scene_file);
    for (const auto& [opt, apply] : appliers)
      if (opt->count() > 0) apply(s);
    return s;
  }
};

struct RenderCli {
  double min_overlap = 0.7;
  int movement_splat = 0;
  int size_splat = 0;

  void add(CLI::App* c) {
    c->add_option("--min-overlap", min_overlap, "Gaussian radius IoU floor")
        ->capture_default_str();
    c->add_option("--movement-splat", movement_splat,
                  "Chebyshev radius to replicate movement targets into, cells")
        ->capture_default_str();
    c->add_option("--size-splat", size_splat,
                  "Chebyshev radius to replicate size targets into, cells")
        ->capture_default_str();
  }

  RenderOptions opts() const { return RenderOptions{min_overlap, movement_splat, size_splat}; }
};

struct NoiseCli {
  PerturbSpec spec;
  std::uint64_t seed = 1337;

  void add(CLI::App* c) {
    c->add_option("--center-noise", spec.center_sigma, "Heatmap noise sigma")
        ->capture_default_str();
    c->add_option("--movement-noise", spec.movement_sigma, "Movement noise sigma, grid units")
        ->capture_default_str();
    c->add_option("--size-noise", spec.size_sigma, "Size noise sigma, grid units")
        ->capture_default_str();
    c->add_option("--noise-seed", seed, "Noise RNG seed")->capture_default_str();
  }
};

struct LinkCli {
  LinkParams params;

  void add(CLI::App* c) {
    c->add_option("--overlap", params.overlap_threshold,
                  "Tubelet overlap needed to extend a link (strict)")
        ->capture_default_str();
    c->add_option("--min-score", params.min_score, "Drop finished tubes below this mean score")
        ->capture_default_str();
    c->add_option("--min-length", params.min_length,
                  "Drop finished tubes shorter than this; 0 means one clip length")
        ->capture_default_str();
    c->add_option("--per-frame", params.candidates_per_frame, "Top candidates kept per frame")
        ->capture_default_str();
    c->add_flag("--averaged-overlap", params.averaged_overlap,
                "Compare candidates against the link's averaged boxes");
  }
};

struct DecodeCli {
  std::string mode = "full_movement";
  int max_peaks = 100;

  void add(CLI::App* c) {
    c->add_option("--mode", mode, "Box assembly mode")
        ->check(CLI::IsMember({"no_movement", "semi_movement", "full_movement"}))
        ->capture_default_str();
    c->add_option("--max-peaks", max_peaks, "Heatmap peaks kept per window")
        ->capture_default_str();
  }
};

// ---------------------------------------------------------------------------
// Reusable pieces of work
// ---------------------------------------------------------------------------

/// Shared per-frame size maps plus per-window center/movement maps with the
/// same noise schedule `synth` freezes to disk.
struct RenderedVideo {
  GridSpec grid;
  std::vector<DenseMap> size_maps;  // one per video frame
  int num_windows = 0;
};

DenseMap noisy_size_map(const VideoAnnotations& video, int frame, const GridSpec& grid,
                        const RenderOptions& ropts, const NoiseCli& noise) {
  DenseMap m = render_size_map(video.instances, frame, grid, ropts);
  add_gaussian_noise(m, noise.spec.size_sigma, derived_seed(noise.seed, frame, 2), 0.0,
                     std::numeric_limits<double>::infinity());
  return m;
}

WindowMaps noisy_window_heads(const VideoAnnotations& video, int window_start,
                              const GridSpec& grid, const RenderOptions& ropts,
                              const NoiseCli& noise) {
  WindowMaps maps = render_perfect_maps(video.instances, window_start, grid, ropts);
  add_gaussian_noise(maps.center, noise.spec.center_sigma,
                     derived_seed(noise.seed, window_start, 0), 0.0, 1.0);
  add_gaussian_noise(maps.movement, noise.spec.movement_sigma,
                     derived_seed(noise.seed, window_start, 1));
  return maps;
}

json metrics_json(const MapResult& fm, double frame_thr, const VideoMapTable& vt,
                  const ErrorBreakdown& eb) {
  json fm_json = tool::to_json(fm);
  fm_json["threshold"] = frame_thr;
  return json{{"schema_version", 1},
              {"frame_map", std::move(fm_json)},
              {"video_map", tool::to_json(vt)},
              {"error_analysis", tool::to_json(eb)}};
}

void print_metrics_summary(const MapResult& fm, double frame_thr, const VideoMapTable& vt,
                           const ErrorBreakdown& eb) {
  std::printf("frame mAP @%.2f: %.4f\n", frame_thr, fm.mean_ap);
  for (const VideoMapRow& row : vt.rows)
    std::printf("video mAP @%.2f: %.4f\n", row.threshold, row.result.mean_ap);
  std::printf("video mAP @0.50:0.95: %.4f\n", vt.integrated.mean_ap);
  std::printf(
      "errors: correct %.3f class %.3f loc %.3f time %.3f other %.3f | missed %.3f\n",
      eb.correct_fraction(), eb.class_fraction(), eb.loc_fraction(), eb.time_fraction(),
      eb.other_fraction(), eb.missed_fraction());
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

struct SynthCmd {
  SceneCli scene;
  GridCli grid;
  RenderCli render;
  NoiseCli noise;
  std::string out;
  int workers = 1;

  void add(CLI::App& root, std::function<int()>& run) {
    CLI::App* c = root.add_subcommand(
        "synth", "Generate a synthetic scene and its idealized prediction maps");
    scene.add(c);
    grid.add(c);
    render.add(c);
    noise.add(c);
    c->add_option("--out", out, "Output directory");
    c->add_option("--workers", workers, "Worker threads")->capture_default_str();
    c->callback([this, &root, &run] { run = [this, &root] { return execute(root); }; });
  }

  int execute(const CLI::App& root) const {
    require(out, "--out");
    const SceneSpec s = scene.resolve();
    const VideoAnnotations video = generate_scene(s);
    const GridSpec g = grid.make(s.width, s.height, s.num_classes);
    if (video.num_frames < g.clip_len)
      throw Error("synth: video_len is shorter than one clip");
    const RenderOptions ropts = render.opts();

    const fs::path dir(out);
    ensure_dir(dir / "maps");
    write_annotations(video, dir / "annotations.json");
    write_file_atomic(dir / "scene.json", scene_spec_to_json(s));

    parallel_for(video.num_frames, workers, [&](int f) {
      write_dense_map(noisy_size_map(video, f, g, ropts, noise), tool::size_path(dir, f));
    });

    const int num_windows = video.num_frames - g.clip_len + 1;
    std::vector<int> starts(static_cast<std::size_t>(num_windows));
    std::iota(starts.begin(), starts.end(), 0);
    parallel_for(num_windows, workers, [&](int i) {
      const int ws = starts[static_cast<std::size_t>(i)];
      const WindowMaps maps = noisy_window_heads(video, ws, g, ropts, noise);
      write_dense_map(maps.center, tool::center_path(dir, ws));
      write_dense_map(maps.movement, tool::movement_path(dir, ws));
    });

    tool::write_manifest({video.video_id, video.num_frames, g, starts}, dir);
    write_config_echo(root, dir);
    std::printf("wrote %d frames, %d windows, %zu instances -> %s\n", video.num_frames,
                num_windows, video.instances.size(), dir.string().c_str());
    return 0;
  }
};

struct EncodeCmd {
  GridCli grid;
  RenderCli render;  // only --min-overlap is meaningful here
  std::string annotations;
  std::string out;
  int classes = 0;
  std::vector<int> windows;

  void add(CLI::App& root, std::function<int()>& run) {
    CLI::App* c = root.add_subcommand(
        "encode", "Encode annotations into ground-truth supervision per window");
    grid.add(c);
    c->add_option("--min-overlap", render.min_overlap, "Gaussian radius IoU floor")
        ->capture_default_str();
    c->add_option("--annotations", annotations, "Annotations JSON");
    c->add_option("--out", out, "Output directory");
    c->add_option("--classes", classes,
                  "Number of classes; 0 infers max class id + 1 from the annotations")
        ->capture_default_str();
    c->add_option("--window", windows, "Window starts to encode (default: all)");
    c->callback([this, &root, &run] { run = [this, &root] { return execute(root); }; });
  }

  int execute(const CLI::App& root) const {
    require(annotations, "--annotations");
    require(out, "--out");
    const VideoAnnotations video = read_annotations(annotations);
    int num_classes = classes;
    if (num_classes == 0) {
      for (const Instance& inst : video.instances)
        num_classes = std::max(num_classes, inst.class_id + 1);
      num_classes = std::max(num_classes, 1);
    }
    const GridSpec g = grid.make(video.width, video.height, num_classes);
    if (video.num_frames < g.clip_len)
      throw Error("encode: video is shorter than one clip");

    std::vector<int> starts = windows;
    if (starts.empty()) {
      starts.resize(static_cast<std::size_t>(video.num_frames - g.clip_len + 1));
      std::iota(starts.begin(), starts.end(), 0);
    }
    const fs::path dir(out);
    ensure_dir(dir);
    int warning_count = 0;
    for (const int ws : starts) {
      if (ws < 0 || ws + g.clip_len > video.num_frames)
        throw Error("encode: window start out of range: " + std::to_string(ws));
      const ClipTargets ct = encode_clip(video.instances, ws, g, render.min_overlap);
      write_dense_map(ct.center_heatmap, dir / numbered("gtC", ws, "moct"));
      json inst_arr = json::array();
      for (int i = 0; i < ct.count(); ++i) {
        const MovementTarget& mt = ct.movement[static_cast<std::size_t>(i)];
        const SizeTarget& st = ct.sizes[static_cast<std::size_t>(i)];
        json cells = json::array(), sizes = json::array();
        for (const GridPoint& p : st.cells) cells.push_back(json::array({p.x, p.y}));
        for (const Size2d& sz : st.sizes) sizes.push_back(json::array({sz.w, sz.h}));
        inst_arr.push_back(json{{"id", ct.instance_ids[static_cast<std::size_t>(i)]},
                                {"anchor", json::array({mt.anchor.x, mt.anchor.y})},
                                {"deltas", mt.deltas},
                                {"cells", std::move(cells)},
                                {"sizes", std::move(sizes)}});
      }
      const json jt{{"start_frame", ws},
                    {"instances", std::move(inst_arr)},
                    {"warnings", ct.warnings}};
      write_file_atomic(dir / numbered("targets", ws, "json"), jt.dump(2) + "\n");
      warning_count += static_cast<int>(ct.warnings.size());
    }
    write_config_echo(root, dir);
    std::printf("encoded %zu windows (%d warnings) -> %s\n", starts.size(), warning_count,
                dir.string().c_str());
    return 0;
  }
};

struct GradcheckCmd {
  GridCli grid;
  int width = 288, height = 288, classes = 8;
  std::uint64_t seed = 7;
  int maps = 4, probes = 64;
  double tolerance = 1e-4;
  std::string out;

  void add(CLI::App& root, std::function<int()>& run) {
    CLI::App* c = root.add_subcommand(
        "gradcheck", "Compare analytic loss gradients against finite differences");
    grid.add(c);
    c->add_option("--width", width, "Frame width, pixels")->capture_default_str();
    c->add_option("--height", height, "Frame height, pixels")->capture_default_str();
    c->add_option("--classes", classes, "Number of classes")->capture_default_str();
    c->add_option("--seed", seed, "Probe RNG seed")->capture_default_str();
    c->add_option("--maps", maps, "Random map pairs per branch")->capture_default_str();
    c->add_option("--probes", probes, "Probed cells per map")->capture_default_str();
    c->add_option("--tolerance", tolerance, "Max allowed relative error")
        ->capture_default_str();
    c->add_option("--out", out, "Write the report as JSON here");
    c->callback([this, &run] { run = [this] { return execute(); }; });
  }

  int execute() const {
    const GridSpec g = grid.make(width, height, classes);
    const GradCheckReport center = gradcheck_center_loss(seed, g, maps, probes);
    const GradCheckReport movement = gradcheck_movement_loss(seed + 1, g, maps, probes);
    const GradCheckReport box = gradcheck_box_loss(seed + 2, g, maps, probes);
    bool ok = true;
    const auto report = [&](const char* name, const GradCheckReport& r) {
      const bool pass = r.max_rel_err < tolerance;
      ok = ok && pass;
      std::printf("%-8s max_rel_err=%.3e probes=%-5d %s\n", name, r.max_rel_err, r.probes,
                  pass ? "ok" : "FAIL");
    };
    report("center", center);
    report("movement", movement);
    report("box", box);
    if (!out.empty()) {
      const auto branch = [](const GradCheckReport& r) {
        return json{{"max_rel_err", r.max_rel_err}, {"probes", r.probes}};
      };
      write_file_atomic(out, json{{"schema_version", 1},
                                  {"tolerance", tolerance},
                                  {"center", branch(center)},
                                  {"movement", branch(movement)},
                                  {"box", branch(box)},
                                  {"pass", ok}}
                                 .dump(2) +
                                 "\n");
    }
    return ok ? 0 : kExitFailure;
  }
};

struct DecodeCmd {
  DecodeCli decode;
  std::string maps_dir;
  std::string out;
  int workers = 1;

  void add(CLI::App& root, std::function<int()>& run) {
    CLI::App* c =
        root.add_subcommand("decode", "Decode prediction maps into tubelets (JSONL)");
    decode.add(c);
    c->add_option("--maps", maps_dir, "Maps directory from `synth`");
    c->add_option("--out", out, "Output tubelets JSONL");
    c->add_option("--workers", workers, "Worker threads")->capture_default_str();
    c->callback([this, &run] { run = [this] { return execute(); }; });
  }

  int execute() const {
    require(maps_dir, "--maps");
    require(out, "--out");
    const fs::path dir(maps_dir);
    const tool::MapsManifest man = tool::read_manifest(dir);
    const DecodeMode mode = decode_mode_from_string(decode.mode);
    const int n = static_cast<int>(man.window_starts.size());
    std::vector<std::vector<Tubelet>> per(static_cast<std::size_t>(n));
    parallel_for(n, workers, [&](int i) {
      const int ws = man.window_starts[static_cast<std::size_t>(i)];
      WindowMaps w;
      w.start_frame = ws;
      w.center = read_dense_map(tool::center_path(dir, ws));
      w.movement = read_dense_map(tool::movement_path(dir, ws));
      w.sizes.reserve(static_cast<std::size_t>(man.grid.clip_len));
      for (int j = 0; j < man.grid.clip_len; ++j)
        w.sizes.push_back(read_dense_map(tool::size_path(dir, ws + j)));
      per[static_cast<std::size_t>(i)] = decode_tubelets(w, man.grid, decode.max_peaks, mode);
    });
    std::vector<Tubelet> all;
    for (const auto& v : per) all.insert(all.end(), v.begin(), v.end());
    tool::write_tubelets_jsonl(all, out);
    std::printf("decoded %d windows -> %zu tubelets -> %s\n", n, all.size(), out.c_str());
    return 0;
  }
};

struct LinkCmd {
  LinkCli link;
  int clip_len = 0;  // 0 infers from the tubelets
  int key_index = -1;
  std::string video_id = "video";
  std::string in;
  std::string out;

  void add(CLI::App& root, std::function<int()>& run) {
    CLI::App* c = root.add_subcommand("link", "Link tubelets into video-level tubes");
    link.add(c);
    c->add_option("--clip-len", clip_len, "Tubelet length; 0 infers from the input")
        ->capture_default_str();
    c->add_option("--key-index", key_index, "Key frame index; -1 selects clip_len/2")
        ->capture_default_str();
    c->add_option("--video-id", video_id, "Video id written to the output")
        ->capture_default_str();
    c->add_option("--tubelets", in, "Input tubelets JSONL");
    c->add_option("--out", out, "Output tubes JSON");
    c->callback([this, &run] { run = [this] { return execute(); }; });
  }

  int execute() const {
    require(in, "--tubelets");
    require(out, "--out");
    const std::vector<Tubelet> tubelets = tool::read_tubelets_jsonl(in);
    int k = clip_len;
    if (k == 0) k = tubelets.empty() ? 7 : tubelets.front().length();
    if (k < 1) throw Error("link: clip length must be >= 1");
    for (const Tubelet& t : tubelets)
      if (t.length() != k)
        throw Error("link: tubelet length " + std::to_string(t.length()) +
                    " does not match clip length " + std::to_string(k));
    int classes = 1;
    for (const Tubelet& t : tubelets) classes = std::max(classes, t.class_id + 1);
    // Linking only consumes clip_len and key_index; the grid dims are inert.
    const GridSpec g = GridSpec::make(k, 4, 4, 1, classes, key_index);
    const std::vector<Tube> tubes = link_video(tubelets, g, link.params);
    tool::write_tubes_json(tubes, video_id, out);
    std::printf("linked %zu tubelets -> %zu tubes -> %s\n", tubelets.size(), tubes.size(),
                out.c_str());
    return 0;
  }
};

struct StreamCmd {
  DecodeCli decode;
  LinkCli link;
  std::string maps_dir;
  std::string out;

  void add(CLI::App& root, std::function<int()>& run) {
    CLI::App* c = root.add_subcommand(
        "stream", "Decode and link online, one frame at a time (same result as decode+link)");
    decode.add(c);
    link.add(c);
    c->add_option("--maps", maps_dir, "Maps directory from `synth`");
    c->add_option("--out", out, "Output tubes JSON");
    c->callback([this, &run] { run = [this] { return execute(); }; });
  }

  int execute() const {
    require(maps_dir, "--maps");
    require(out, "--out");
    const fs::path dir(maps_dir);
    const tool::MapsManifest man = tool::read_manifest(dir);
    StreamParams sp;
    sp.max_peaks = decode.max_peaks;
    sp.mode = decode_mode_from_string(decode.mode);
    sp.link = link.params;
    StreamSession session(man.grid, sp, [&dir](int ws) {
      return std::make_pair(read_dense_map(tool::center_path(dir, ws)),
                            read_dense_map(tool::movement_path(dir, ws)));
    });
    std::vector<Tube> tubes;
    for (int f = 0; f < man.num_frames; ++f) {
      std::vector<Tube> done = session.push_frame(read_dense_map(tool::size_path(dir, f)));
      tubes.insert(tubes.end(), std::make_move_iterator(done.begin()),
                   std::make_move_iterator(done.end()));
    }
    std::vector<Tube> rest = session.finish();
    tubes.insert(tubes.end(), std::make_move_iterator(rest.begin()),
                 std::make_move_iterator(rest.end()));
    tool::write_tubes_json(tubes, man.video_id, out);
    std::printf("streamed %d frames -> %zu tubes -> %s\n", man.num_frames, tubes.size(),
                out.c_str());
    return 0;
  }
};

struct EvalCmd {
  std::vector<std::string> tubes_paths;
  std::vector<std::string> ann_paths;
  double frame_thr = 0.5;
  std::vector<double> video_thrs;
  double error_thr = 0.5;
  double error_score_thr = 0.0;
  int workers = 1;
  std::string out;

  void add(CLI::App& root, std::function<int()>& run) {
    CLI::App* c = root.add_subcommand(
        "eval", "Score tubes against annotations: frame/video mAP and error analysis");
    c->add_option("--tubes", tubes_paths, "Tube JSON files, one per video");
    c->add_option("--annotations", ann_paths,
                  "Annotation JSON files, paired with --tubes by position");
    c->add_option("--frame-thr", frame_thr, "Frame mAP IoU threshold")->capture_default_str();
    c->add_option("--video-thr", video_thrs,
                  "Video mAP tube-IoU thresholds (default: 0.2 0.5 0.75)");
    c->add_option("--error-thr", error_thr, "Error analysis IoU threshold")
        ->capture_default_str();
    c->add_option("--error-score-thr", error_score_thr,
                  "Ignore detections below this score in the error analysis")
        ->capture_default_str();
    c->add_option("--workers", workers, "Worker threads")->capture_default_str();
    c->add_option("--out", out, "Write metrics JSON here (otherwise print to stdout)");
    c->callback([this, &run] { run = [this] { return execute(); }; });
  }

  int execute() const {
    require(tubes_paths, "--tubes");
    require(ann_paths, "--annotations");
    if (tubes_paths.size() != ann_paths.size())
      throw Error("eval: --tubes and --annotations must pair up");
    std::vector<FrameDet> fdets;
    std::vector<FrameGt> fgts;
    std::vector<TubeDet> tdets;
    std::vector<TubeGt> tgts;
    for (std::size_t i = 0; i < tubes_paths.size(); ++i) {
      const int vid = static_cast<int>(i);
      const tool::TubesFile tf = tool::read_tubes_json(tubes_paths[i]);
      const VideoAnnotations va = read_annotations(ann_paths[i]);
      const auto fd = frame_dets_from(tf.tubes, vid);
      const auto fg = frame_gts_from(va, vid);
      const auto td = tube_dets_from(tf.tubes, vid);
      const auto tg = tube_gts_from(va, vid);
      fdets.insert(fdets.end(), fd.begin(), fd.end());
      fgts.insert(fgts.end(), fg.begin(), fg.end());
      tdets.insert(tdets.end(), td.begin(), td.end());
      tgts.insert(tgts.end(), tg.begin(), tg.end());
    }
    std::vector<double> thrs = video_thrs.empty() ? std::vector<double>{0.2, 0.5, 0.75}
                                                  : video_thrs;
    const MapResult fm = frame_map(fdets, fgts, frame_thr, workers);
    const VideoMapTable vt = video_map(tdets, tgts, thrs, workers);
    const ErrorBreakdown eb = error_analysis(fdets, fgts, error_thr, error_score_thr);
    const json metrics = metrics_json(fm, frame_thr, vt, eb);
    if (out.empty()) {
      std::cout << metrics.dump(2) << "\n";
    } else {
      write_file_atomic(out, metrics.dump(2) + "\n");
      print_metrics_summary(fm, frame_thr, vt, eb);
      std::printf("metrics -> %s\n", out.c_str());
    }
    return 0;
  }
};

struct PipelineCmd {
  SceneCli scene;
  GridCli grid;
  RenderCli render;
  NoiseCli noise;
  DecodeCli decode;
  LinkCli link;
  double frame_thr = 0.5;
  int workers = 1;
  std::string out;

  void add(CLI::App& root, std::function<int()>& run) {
    CLI::App* c = root.add_subcommand(
        "pipeline", "Scene -> maps -> decode -> link -> eval, end to end in memory");
    scene.add(c);
    grid.add(c);
    render.add(c);
    noise.add(c);
    decode.add(c);
    link.add(c);
    c->add_option("--frame-thr", frame_thr, "Frame mAP IoU threshold")->capture_default_str();
    c->add_option("--workers", workers, "Worker threads")->capture_default_str();
    c->add_option("--out", out, "Output directory");
    c->callback([this, &root, &run] { run = [this, &root] { return execute(root); }; });
  }

  int execute(const CLI::App& root) const {
    require(out, "--out");
    const SceneSpec s = scene.resolve();
    const VideoAnnotations video = generate_scene(s);
    const GridSpec g = grid.make(s.width, s.height, s.num_classes);
    if (video.num_frames < g.clip_len)
      throw Error("pipeline: video_len is shorter than one clip");
    const RenderOptions ropts = render.opts();
    const DecodeMode mode = decode_mode_from_string(decode.mode);

    // Size maps are per frame and shared between overlapping windows, exactly
    // as `synth` lays them out on disk.
    std::vector<DenseMap> size_maps;
    size_maps.reserve(static_cast<std::size_t>(video.num_frames));
    for (int f = 0; f < video.num_frames; ++f)
      size_maps.push_back(noisy_size_map(video, f, g, ropts, noise));

    const int num_windows = video.num_frames - g.clip_len + 1;
    std::vector<std::vector<Tubelet>> per(static_cast<std::size_t>(num_windows));
    parallel_for(num_windows, workers, [&](int ws) {
      WindowMaps maps = noisy_window_heads(video, ws, g, ropts, noise);
      maps.sizes.assign(size_maps.begin() + ws, size_maps.begin() + ws + g.clip_len);
      per[static_cast<std::size_t>(ws)] = decode_tubelets(maps, g, decode.max_peaks, mode);
    });
    std::vector<Tubelet> tubelets;
    for (const auto& v : per) tubelets.insert(tubelets.end(), v.begin(), v.end());

    const std::vector<Tube> tubes = link_video(tubelets, g, link.params);

    const auto fdets = frame_dets_from(tubes, 0);
    const auto fgts = frame_gts_from(video, 0);
    const auto tdets = tube_dets_from(tubes, 0);
    const auto tgts = tube_gts_from(video, 0);
    const MapResult fm = frame_map(fdets, fgts, frame_thr, workers);
    const VideoMapTable vt = video_map(tdets, tgts, {0.2, 0.5, 0.75}, workers);
    const ErrorBreakdown eb = error_analysis(fdets, fgts);

    const fs::path dir(out);
    ensure_dir(dir);
    write_annotations(video, dir / "annotations.json");
    tool::write_tubelets_jsonl(tubelets, dir / "tubelets.jsonl");
    tool::write_tubes_json(tubes, video.video_id, dir / "tubes.json");
    write_file_atomic(dir / "metrics.json", metrics_json(fm, frame_thr, vt, eb).dump(2) + "\n");
    write_config_echo(root, dir);
    std::printf("%d windows -> %zu tubelets -> %zu tubes\n", num_windows, tubelets.size(),
                tubes.size());
    print_metrics_summary(fm, frame_thr, vt, eb);
    std::printf("outputs -> %s\n", dir.string().c_str());
    return 0;
  }
};

struct OverlayCmd {
  std::string annotations;
  std::string tubes;
  std::string out;
  std::vector<int> frames;
  double min_score = 0.0;

  void add(CLI::App& root, std::function<int()>& run) {
    CLI::App* c = root.add_subcommand(
        "overlay", "Render frames as BMP images with ground-truth and tube boxes");
    c->add_option("--annotations", annotations, "Annotations JSON");
    c->add_option("--tubes", tubes, "Tubes JSON to draw on top (optional)");
    c->add_option("--out", out, "Output directory");
    c->add_option("--frame", frames, "Frames to render (default: all)");
    c->add_option("--min-score", min_score, "Skip tubes below this score")
        ->capture_default_str();
    c->callback([this, &run] { run = [this] { return execute(); }; });
  }

  int execute() const {
    require(annotations, "--annotations");
    require(out, "--out");
    const VideoAnnotations video = read_annotations(annotations);
    std::optional<tool::TubesFile> tf;
    if (!tubes.empty()) tf = tool::read_tubes_json(tubes);
    std::vector<int> selected = frames;
    if (selected.empty()) {
      selected.resize(static_cast<std::size_t>(video.num_frames));
      std::iota(selected.begin(), selected.end(), 0);
    }
    const fs::path dir(out);
    ensure_dir(dir);
    for (const int f : selected) {
      if (f < 0 || f >= video.num_frames)
        throw Error("overlay: frame out of range: " + std::to_string(f));
      tool::Canvas canvas(video.width, video.height);
      for (const Instance& inst : video.instances)
        if (inst.covers_frame(f))
          canvas.draw_box(inst.box_at(f), tool::class_color(inst.class_id), 1);
      if (tf) {
        for (const Tube& t : tf->tubes)
          if (t.covers_frame(f) && t.score >= min_score)
            canvas.draw_box(t.box_at(f), tool::class_color(t.class_id), 3);
      }
      canvas.write_bmp(dir / numbered("frame", f, "bmp"));
    }
    std::printf("rendered %zu frames -> %s\n", selected.size(), dir.string().c_str());
    return 0;
  }
};

int run_cli(int argc, char** argv) {
  CLI::App app{"tubekit: anchor-free action tubelet toolkit"};
  app.fallthrough(true);  // subcommands inherit; lets `--config` follow the subcommand
  app.config_formatter(std::make_shared<tool::JsonConfig>());
  app.set_config("--config", "", "JSON run config; command-line flags override it")
      ->envname("TUBEKIT_CONFIG");
  app.allow_config_extras(CLI::config_extras_mode::ignore_all);
  app.require_subcommand(0, 1);
  app.footer(
      "Exit codes: 0 ok, 1 failed computation, 2 bad command line, 3 malformed config,\n"
      "            4 file system error, 5 invalid or inconsistent data.");
  bool print_config = false;
  app.add_flag("--print-config", print_config,
               "Print the effective config as JSON and exit")
      ->configurable(false);

  std::function<int()> run;
  SynthCmd synth;
  EncodeCmd encode;
  GradcheckCmd gradcheck;
  DecodeCmd decode;
  LinkCmd link;
  StreamCmd stream;
  EvalCmd eval;
  PipelineCmd pipeline;
  OverlayCmd overlay;
  synth.add(app, run);
  encode.add(app, run);
  gradcheck.add(app, run);
  decode.add(app, run);
  link.add(app, run);
  stream.add(app, run);
  eval.add(app, run);
  pipeline.add(app, run);
  overlay.add(app, run);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const CLI::FileError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  if (print_config) {
    std::cout << app.config_to_str(true, false);
    return 0;
  }
  if (!run) {
    std::cout << app.help();
    return kExitUsage;
  }
  return run();
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return kExitFailure;
  }
}
