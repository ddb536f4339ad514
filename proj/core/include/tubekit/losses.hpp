#pragma once

#include <span>
#include <vector>

#include "tubekit/dense_map.hpp"
#include "tubekit/encoder.hpp"

namespace tubekit {

/// Center-branch predictions are clamped to [kPredClampLo, 1 - kPredClampLo]
/// before any logarithm; the loss is constant (gradient zero) outside that
/// band.
inline constexpr double kPredClampLo = 1e-4;

/// Scalar loss plus its gradient with respect to one dense prediction map.
struct LossGrad {
  double value = 0.0;
  DenseMap grad;
};

/// Loss plus per-frame gradients (box branch predicts one map per frame).
struct ClipLossGrad {
  double value = 0.0;
  std::vector<DenseMap> grads;
};

/// Penalty-reduced per-cell focal loss for the center heatmap.
///
/// For cells where gt == 1:  -(1-p)^alpha * log(p)
/// elsewhere:                -(1-gt)^beta * p^alpha * log(1-p)
/// summed over all cells and divided by n (the number of instances in the
/// clip). n == 0 is allowed only for heatmaps with no positive cell; the sum
/// is then divided by 1.
LossGrad center_focal_loss(const DenseMap& pred, const DenseMap& gt, double alpha,
                           double beta, int n);

/// L1 movement loss, supervised only at each instance's anchor cell:
/// (1/n) * sum_i sum_t |pred[anchor_i][t] - deltas_i[t]|, n = #targets.
/// The subgradient at zero error is taken as 0. Empty target list gives 0.
LossGrad movement_loss(const DenseMap& pred, std::span<const MovementTarget> targets);

/// L1 box-size loss over per-frame maps, supervised at each instance's
/// per-frame cells: (1/n) * sum_i sum_j |pred_j[cell_ij] - size_ij|.
/// With per_frame_normalization the divisor becomes n * clip_len instead.
ClipLossGrad box_loss(std::span<const DenseMap> pred,
                      std::span<const SizeTarget> targets,
                      bool per_frame_normalization = false);

/// Weighted combination of the three branch losses.
struct LossReport {
  double center = 0.0;
  double movement = 0.0;
  double box = 0.0;
  double movement_weight = 1.0;
  double box_weight = 0.1;
  double total = 0.0;
};

LossReport total_loss(double center, double movement, double box,
                      double movement_weight = 1.0, double box_weight = 0.1);

}  // namespace tubekit
