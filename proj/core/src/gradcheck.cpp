#include "tubekit/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "tubekit/dense_map.hpp"
#include "tubekit/encoder.hpp"
#include "tubekit/losses.hpp"
#include "tubekit/rng.hpp"

namespace tubekit {

namespace {

constexpr double kKinkBand = 1e-6;

double rel_err(double analytic, double fd) {
  const double denom = std::max({std::abs(analytic), std::abs(fd), kGradCheckFloor});
  return std::abs(analytic - fd) / denom;
}

double central_diff(const std::function<double()>& loss, double& cell, double h) {
  const double orig = cell;
  cell = orig + h;
  const double fp = loss();
  cell = orig - h;
  const double fm = loss();
  cell = orig;
  return (fp - fm) / (2.0 * h);
}

DenseMap random_pred(Rng& rng, int h, int w, int c, double lo, double hi) {
  DenseMap m(h, w, c);
  for (auto& v : m.data()) v = rng.uniform(lo, hi);
  return m;
}

/// gt heatmap shaped like real encoder output: a few gaussian bumps whose
/// centers are exactly 1. Returns the instance count.
int random_gt_heatmap(Rng& rng, const GridSpec& spec, DenseMap& out) {
  out = DenseMap(spec.grid_h(), spec.grid_w(), spec.num_classes, 0.0);
  const int n = rng.uniform_int(1, 4);
  for (int i = 0; i < n; ++i) {
    const int ch = rng.uniform_int(0, spec.num_classes - 1);
    const int cx = rng.uniform_int(0, spec.grid_w() - 1);
    const int cy = rng.uniform_int(0, spec.grid_h() - 1);
    const double sigma = gaussian_sigma(rng.uniform(2.0, 15.0), rng.uniform(2.0, 15.0));
    add_gaussian(out, ch, cx, cy, sigma);
  }
  return n;
}

}  // namespace

GradCheckReport gradcheck_center_loss(std::uint64_t seed, const GridSpec& spec,
                                      int num_maps, int probes_per_map, double alpha,
                                      double beta) {
  Rng rng(seed);
  GradCheckReport report;
  // Central differences of a full-map sum: h trades truncation error against
  // rounding noise in the loss difference; 3e-5 keeps both below ~1e-5
  // relative at this map size with the compensated loss accumulation.
  const double h = 3e-5;
  for (int m = 0; m < num_maps; ++m) {
    DenseMap gt;
    const int n = random_gt_heatmap(rng, spec, gt);
    // Stay away from the clamp band edges so probed cells are smooth.
    DenseMap pred = random_pred(rng, spec.grid_h(), spec.grid_w(), spec.num_classes,
                                0.05, 0.95);
    const DenseMap analytic = center_focal_loss(pred, gt, alpha, beta, n).grad;
    const auto loss = [&]() {
      return center_focal_loss(pred, gt, alpha, beta, n).value;
    };
    for (int p = 0; p < probes_per_map; ++p) {
      const int x = rng.uniform_int(0, spec.grid_w() - 1);
      const int y = rng.uniform_int(0, spec.grid_h() - 1);
      const int c = rng.uniform_int(0, spec.num_classes - 1);
      const double fd = central_diff(loss, pred.at(x, y, c), h);
      report.max_rel_err = std::max(report.max_rel_err, rel_err(analytic.at(x, y, c), fd));
      ++report.probes;
    }
  }
  return report;
}

GradCheckReport gradcheck_movement_loss(std::uint64_t seed, const GridSpec& spec,
                                        int num_maps, int probes_per_map) {
  Rng rng(seed);
  GradCheckReport report;
  const int channels = 2 * spec.clip_len;
  const double h = 1e-7;
  for (int m = 0; m < num_maps; ++m) {
    DenseMap pred = random_pred(rng, spec.grid_h(), spec.grid_w(), channels, -5.0, 5.0);
    std::vector<MovementTarget> targets;
    const int n = rng.uniform_int(1, 3);
    for (int i = 0; i < n; ++i) {
      MovementTarget t;
      t.anchor = {rng.uniform_int(0, spec.grid_w() - 1),
                  rng.uniform_int(0, spec.grid_h() - 1)};
      for (int c = 0; c < channels; ++c) t.deltas.push_back(rng.uniform(-5.0, 5.0));
      targets.push_back(std::move(t));
    }
    const DenseMap analytic = movement_loss(pred, targets).grad;
    const auto loss = [&]() { return movement_loss(pred, targets).value; };
    const auto near_kink = [&](int x, int y, int c) {
      for (const auto& t : targets)
        if (t.anchor.x == x && t.anchor.y == y &&
            std::abs(pred.at(x, y, c) - t.deltas[static_cast<std::size_t>(c)]) < kKinkBand)
          return true;
      return false;
    };
    for (int p = 0; p < probes_per_map; ++p) {
      int x, y, c, attempts = 0;
      do {
        x = rng.uniform_int(0, spec.grid_w() - 1);
        y = rng.uniform_int(0, spec.grid_h() - 1);
        c = rng.uniform_int(0, channels - 1);
      } while (near_kink(x, y, c) && ++attempts < 64);
      if (near_kink(x, y, c)) continue;
      const double fd = central_diff(loss, pred.at(x, y, c), h);
      report.max_rel_err = std::max(report.max_rel_err, rel_err(analytic.at(x, y, c), fd));
      ++report.probes;
    }
  }
  return report;
}

GradCheckReport gradcheck_box_loss(std::uint64_t seed, const GridSpec& spec,
                                   int num_maps, int probes_per_map,
                                   bool per_frame_normalization) {
  Rng rng(seed);
  GradCheckReport report;
  const double h = 1e-7;
  for (int m = 0; m < num_maps; ++m) {
    std::vector<DenseMap> pred;
    for (int j = 0; j < spec.clip_len; ++j)
      pred.push_back(random_pred(rng, spec.grid_h(), spec.grid_w(), 2, 0.0, 20.0));
    std::vector<SizeTarget> targets;
    const int n = rng.uniform_int(1, 3);
    for (int i = 0; i < n; ++i) {
      SizeTarget t;
      for (int j = 0; j < spec.clip_len; ++j) {
        t.cells.push_back({rng.uniform_int(0, spec.grid_w() - 1),
                           rng.uniform_int(0, spec.grid_h() - 1)});
        t.sizes.push_back({rng.uniform(0.0, 20.0), rng.uniform(0.0, 20.0)});
      }
      targets.push_back(std::move(t));
    }
    const auto result = box_loss(pred, targets, per_frame_normalization);
    const auto loss = [&]() {
      return box_loss(pred, targets, per_frame_normalization).value;
    };
    const auto near_kink = [&](int j, int x, int y, int c) {
      for (const auto& t : targets) {
        const auto cell = t.cells[static_cast<std::size_t>(j)];
        if (cell.x != x || cell.y != y) continue;
        const double target = c == 0 ? t.sizes[static_cast<std::size_t>(j)].w
                                     : t.sizes[static_cast<std::size_t>(j)].h;
        if (std::abs(pred[static_cast<std::size_t>(j)].at(x, y, c) - target) < kKinkBand)
          return true;
      }
      return false;
    };
    for (int p = 0; p < probes_per_map; ++p) {
      int j, x, y, c, attempts = 0;
      do {
        j = rng.uniform_int(0, spec.clip_len - 1);
        x = rng.uniform_int(0, spec.grid_w() - 1);
        y = rng.uniform_int(0, spec.grid_h() - 1);
        c = rng.uniform_int(0, 1);
      } while (near_kink(j, x, y, c) && ++attempts < 64);
      if (near_kink(j, x, y, c)) continue;
      const double fd =
          central_diff(loss, pred[static_cast<std::size_t>(j)].at(x, y, c), h);
      const double analytic = result.grads[static_cast<std::size_t>(j)].at(x, y, c);
      report.max_rel_err = std::max(report.max_rel_err, rel_err(analytic, fd));
      ++report.probes;
    }
  }
  return report;
}

}  // namespace tubekit
