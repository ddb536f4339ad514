#include <doctest.h>

#include <cmath>
#include <vector>

#include "tubekit/losses.hpp"

using namespace tubekit;

TEST_SUITE_BEGIN("losses");

TEST_CASE("center focal loss: positive-cell hand value") {
  DenseMap gt(1, 1, 1, 1.0);
  DenseMap pred(1, 1, 1, 0.6);
  const LossGrad lg = center_focal_loss(pred, gt, 2.0, 4.0, 1);
  // -(1-p)^2 * log(p) at p = 0.6.
  CHECK(lg.value == doctest::Approx(-0.16 * std::log(0.6)).epsilon(1e-12));
  // d/dp = 2(1-p) log(p) - (1-p)^2 / p.
  const double expect_grad = 2.0 * 0.4 * std::log(0.6) - 0.16 / 0.6;
  CHECK(lg.grad.at(0, 0, 0) == doctest::Approx(expect_grad).epsilon(1e-12));
}

TEST_CASE("center focal loss: negative-cell hand value") {
  DenseMap gt(1, 1, 1, 0.5);
  DenseMap pred(1, 1, 1, 0.3);
  const LossGrad lg = center_focal_loss(pred, gt, 2.0, 4.0, 1);
  // -(1-gt)^4 * p^2 * log(1-p).
  const double w = std::pow(0.5, 4.0);
  CHECK(lg.value == doctest::Approx(-w * 0.09 * std::log(0.7)).epsilon(1e-12));
  // d/dp = -(1-gt)^4 * (2p log(1-p) - p^2 / (1-p)).
  const double expect_grad = -w * (2.0 * 0.3 * std::log(0.7) - 0.09 / 0.7);
  CHECK(lg.grad.at(0, 0, 0) == doctest::Approx(expect_grad).epsilon(1e-12));
  CHECK(lg.grad.at(0, 0, 0) > 0.0);  // raising p raises the penalty
}

TEST_CASE("center focal loss divides by the instance count") {
  DenseMap gt(2, 2, 1);
  gt.at(0, 0, 0) = 1.0;
  gt.at(1, 1, 0) = 1.0;
  DenseMap pred(2, 2, 1, 0.5);
  const double l1 = center_focal_loss(pred, gt, 2.0, 4.0, 1).value;
  const double l2 = center_focal_loss(pred, gt, 2.0, 4.0, 2).value;
  CHECK(l2 == doctest::Approx(l1 / 2.0).epsilon(1e-12));
}

TEST_CASE("center focal loss clamps predictions and zeroes the gradient there") {
  DenseMap gt(1, 1, 1, 1.0);
  DenseMap pred(1, 1, 1, 0.0);  // log(0) would be -inf unclamped
  const LossGrad lg = center_focal_loss(pred, gt, 2.0, 4.0, 1);
  const double lo = kPredClampLo;
  CHECK(lg.value ==
        doctest::Approx(-(1.0 - lo) * (1.0 - lo) * std::log(lo)).epsilon(1e-12));
  CHECK(lg.grad.at(0, 0, 0) == 0.0);

  DenseMap pred_hi(1, 1, 1, 1.0);
  DenseMap gt_zero(1, 1, 1, 0.0);
  const LossGrad hg = center_focal_loss(pred_hi, gt_zero, 2.0, 4.0, 1);
  CHECK(std::isfinite(hg.value));
  CHECK(hg.grad.at(0, 0, 0) == 0.0);
}

TEST_CASE("movement loss: supervised cells only, subgradient 0 at kinks") {
  DenseMap pred(8, 8, 6);
  pred.at(2, 2, 0) = 0.0;  // target 0.5  -> err -0.5
  pred.at(2, 2, 1) = 0.0;  // target -0.25 -> err +0.25
  pred.at(2, 2, 2) = 0.3;  // target 0.3  -> err 0 (kink)
  pred.at(5, 5, 0) = 9.0;  // unsupervised cell, must not contribute

  MovementTarget t;
  t.anchor = {2, 2};
  t.deltas = {0.5, -0.25, 0.3, 0.0, 0.0, 0.0};
  const LossGrad lg = movement_loss(pred, std::vector<MovementTarget>{t});
  CHECK(lg.value == doctest::Approx(0.75).epsilon(1e-12));  // (0.5 + 0.25) / 1
  CHECK(lg.grad.at(2, 2, 0) == -1.0);
  CHECK(lg.grad.at(2, 2, 1) == 1.0);
  CHECK(lg.grad.at(2, 2, 2) == 0.0);  // exact hit: subgradient 0
  CHECK(lg.grad.at(5, 5, 0) == 0.0);
}

TEST_CASE("movement loss: two-target normalization") {
  DenseMap pred(8, 8, 2);
  MovementTarget a;
  a.anchor = {1, 1};
  a.deltas = {1.0, 0.0};
  MovementTarget b;
  b.anchor = {3, 3};
  b.deltas = {0.0, -2.0};
  // |0-1| + |0-0| + |0-0| + |0+2| = 3, n = 2.
  const LossGrad lg = movement_loss(pred, std::vector<MovementTarget>{a, b});
  CHECK(lg.value == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(lg.grad.at(1, 1, 0) == -0.5);  // sign / n
  CHECK(lg.grad.at(3, 3, 1) == 0.5);
}

TEST_CASE("movement loss: empty target list gives exactly zero") {
  DenseMap pred(4, 4, 2, 3.0);
  const LossGrad lg = movement_loss(pred, std::vector<MovementTarget>{});
  CHECK(lg.value == 0.0);
  for (double g : lg.grad.data()) CHECK(g == 0.0);
}

TEST_CASE("box loss: per-frame supervised cells, both normalizations") {
  std::vector<DenseMap> pred(2, DenseMap(4, 4, 2));
  pred[0].at(1, 1, 0) = 2.0;  // target w 1.5 -> err +0.5
  pred[0].at(1, 1, 1) = 2.0;  // target h 2.0 -> err 0

  SizeTarget t;
  t.cells = {{1, 1}, {2, 2}};
  t.sizes = {{1.5, 2.0}, {1.25, 1.75}};

  const ClipLossGrad sum = box_loss(pred, std::vector<SizeTarget>{t});
  // (0.5 + 0 + 1.25 + 1.75) / 1.
  CHECK(sum.value == doctest::Approx(3.5).epsilon(1e-12));
  REQUIRE(sum.grads.size() == 2);
  CHECK(sum.grads[0].at(1, 1, 0) == 1.0);
  CHECK(sum.grads[0].at(1, 1, 1) == 0.0);
  CHECK(sum.grads[1].at(2, 2, 0) == -1.0);
  CHECK(sum.grads[1].at(2, 2, 1) == -1.0);

  const ClipLossGrad per_frame = box_loss(pred, std::vector<SizeTarget>{t}, true);
  CHECK(per_frame.value == doctest::Approx(3.5 / 2.0).epsilon(1e-12));
  CHECK(per_frame.grads[0].at(1, 1, 0) == 0.5);
}

TEST_CASE("total loss applies the branch weights") {
  const LossReport r = total_loss(0.5, 0.25, 2.0);
  CHECK(r.center == 0.5);
  CHECK(r.movement == 0.25);
  CHECK(r.box == 2.0);
  CHECK(r.movement_weight == 1.0);
  CHECK(r.box_weight == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(r.total == doctest::Approx(0.5 + 0.25 + 0.2).epsilon(1e-12));

  const LossReport c = total_loss(1.0, 2.0, 3.0, 0.5, 2.0);
  CHECK(c.total == doctest::Approx(1.0 + 1.0 + 6.0).epsilon(1e-12));
}

TEST_SUITE_END();
