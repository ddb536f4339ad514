#include "tubekit/losses.hpp"

#include <cmath>

namespace tubekit {

namespace {

double sign_of(double v) {
  if (v > 0.0) return 1.0;
  if (v < 0.0) return -1.0;
  return 0.0;
}

/// Neumaier-compensated accumulator. Keeps the summed loss accurate to a few
/// ulp independent of cell count, which finite-difference gradient checking
/// of a full-map loss depends on.
struct CompensatedSum {
  double sum = 0.0;
  double comp = 0.0;
  void add(double t) {
    const double u = sum + t;
    if (std::abs(sum) >= std::abs(t))
      comp += (sum - u) + t;
    else
      comp += (t - u) + sum;
    sum = u;
  }
  double get() const { return sum + comp; }
};

/// pow with exact fast paths for the common small integer exponents.
double pow_fast(double x, double e) {
  if (e == 2.0) return x * x;
  if (e == 4.0) {
    const double s = x * x;
    return s * s;
  }
  if (e == 1.0) return x;
  if (e == 3.0) return x * x * x;
  return std::pow(x, e);
}

}  // namespace

LossGrad center_focal_loss(const DenseMap& pred, const DenseMap& gt, double alpha,
                           double beta, int n) {
  if (!pred.same_shape(gt))
    throw Error("center_focal_loss: pred/gt shape mismatch");
  if (n < 0) throw Error("center_focal_loss: negative instance count");

  const double lo = kPredClampLo;
  const double hi = 1.0 - kPredClampLo;

  bool has_positive = false;
  CompensatedSum sum;
  LossGrad out;
  out.grad = DenseMap(pred.grid_h(), pred.grid_w(), pred.channels(), 0.0);

  const auto& pv = pred.data();
  const auto& gv = gt.data();
  auto& grad = out.grad.data();
  const double divisor = (n == 0) ? 1.0 : static_cast<double>(n);

  for (std::size_t i = 0; i < pv.size(); ++i) {
    const double g = gv[i];
    if (g < 0.0 || g > 1.0)
      throw Error("center_focal_loss: gt values must lie in [0, 1]");
    const double raw = pv[i];
    const bool clamped = raw < lo || raw > hi;
    const double p = clamped ? (raw < lo ? lo : hi) : raw;
    if (g == 1.0) {
      has_positive = true;
      const double q = 1.0 - p;
      sum.add(pow_fast(q, alpha) * std::log(p));
      if (!clamped)
        grad[i] = -(-alpha * pow_fast(q, alpha - 1.0) * std::log(p) +
                    pow_fast(q, alpha) / p) /
                  divisor;
    } else {
      const double w = pow_fast(1.0 - g, beta);
      const double q = 1.0 - p;
      sum.add(w * pow_fast(p, alpha) * std::log(q));
      if (!clamped)
        grad[i] = -w *
                  (alpha * pow_fast(p, alpha - 1.0) * std::log(q) -
                   pow_fast(p, alpha) / q) /
                  divisor;
    }
  }
  if (n == 0 && has_positive)
    throw Error("center_focal_loss: n == 0 but gt contains positive cells");

  out.value = -sum.get() / divisor;
  return out;
}

LossGrad movement_loss(const DenseMap& pred, std::span<const MovementTarget> targets) {
  const int channels = pred.channels();
  LossGrad out;
  out.grad = DenseMap(pred.grid_h(), pred.grid_w(), channels, 0.0);
  if (targets.empty()) return out;

  const double n = static_cast<double>(targets.size());
  double sum = 0.0;
  for (const auto& t : targets) {
    if (static_cast<int>(t.deltas.size()) != channels)
      throw Error("movement_loss: target delta count must equal map channels");
    if (!pred.in_grid(t.anchor.x, t.anchor.y))
      throw Error("movement_loss: anchor cell outside grid");
    for (int c = 0; c < channels; ++c) {
      const double diff =
          pred.at(t.anchor.x, t.anchor.y, c) - t.deltas[static_cast<std::size_t>(c)];
      sum += std::abs(diff);
      out.grad.at(t.anchor.x, t.anchor.y, c) += sign_of(diff) / n;
    }
  }
  out.value = sum / n;
  return out;
}

ClipLossGrad box_loss(std::span<const DenseMap> pred, std::span<const SizeTarget> targets,
                      bool per_frame_normalization) {
  if (pred.empty()) throw Error("box_loss: no prediction maps");
  const int clip_len = static_cast<int>(pred.size());
  for (const auto& m : pred) {
    if (!m.same_shape(pred[0])) throw Error("box_loss: frame maps must share one shape");
    if (m.channels() != 2) throw Error("box_loss: size maps must have 2 channels");
  }

  ClipLossGrad out;
  out.grads.assign(pred.size(), DenseMap(pred[0].grid_h(), pred[0].grid_w(), 2, 0.0));
  if (targets.empty()) return out;

  const double n = static_cast<double>(targets.size()) *
                   (per_frame_normalization ? static_cast<double>(clip_len) : 1.0);
  double sum = 0.0;
  for (const auto& t : targets) {
    if (static_cast<int>(t.cells.size()) != clip_len ||
        static_cast<int>(t.sizes.size()) != clip_len)
      throw Error("box_loss: target length must equal the number of frame maps");
    for (int j = 0; j < clip_len; ++j) {
      const GridPoint cell = t.cells[static_cast<std::size_t>(j)];
      const Size2d size = t.sizes[static_cast<std::size_t>(j)];
      const DenseMap& map = pred[static_cast<std::size_t>(j)];
      if (!map.in_grid(cell.x, cell.y))
        throw Error("box_loss: supervised cell outside grid");
      const double dw = map.at(cell.x, cell.y, 0) - size.w;
      const double dh = map.at(cell.x, cell.y, 1) - size.h;
      sum += std::abs(dw) + std::abs(dh);
      auto& gm = out.grads[static_cast<std::size_t>(j)];
      gm.at(cell.x, cell.y, 0) += sign_of(dw) / n;
      gm.at(cell.x, cell.y, 1) += sign_of(dh) / n;
    }
  }
  out.value = sum / n;
  return out;
}

LossReport total_loss(double center, double movement, double box,
                      double movement_weight, double box_weight) {
  LossReport r;
  r.center = center;
  r.movement = movement;
  r.box = box;
  r.movement_weight = movement_weight;
  r.box_weight = box_weight;
  r.total = center + movement_weight * movement + box_weight * box;
  return r;
}

}  // namespace tubekit
