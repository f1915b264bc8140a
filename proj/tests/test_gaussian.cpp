//   Copyright (c) 2026 rotdet Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "rotdet/gaussian.hpp"
#include "rotdet/reference.hpp"
#include "rotdet/rng.hpp"

using namespace rotdet;

namespace {

const reference::BoxDomain kLossDomain{-8.0, 8.0, 4.0, 30.0, 0.0, kHalfPi};

double fd_rel_error(const std::array<double, 5>& analytic, const std::array<double, 5>& fd) {
  double worst = 0.0;
  for (int i = 0; i < 5; ++i) {
    const double a = analytic[static_cast<std::size_t>(i)];
    const double f = fd[static_cast<std::size_t>(i)];
    worst = std::max(worst, std::abs(a - f) / std::max({std::abs(a), std::abs(f), 1e-4}));
  }
  return worst;
}

}  // namespace

TEST_CASE("rbox_to_gaussian covariance for the axis-aligned case") {
  const GaussianBox g = rbox_to_gaussian({0, 0, 12, 6, 0});
  CHECK(g.mean.x == 0.0);
  CHECK(g.mean.y == 0.0);
  CHECK(g.cov.xx == Catch::Approx(12.0));   // 144/12
  CHECK(g.cov.yy == Catch::Approx(3.0));    // 36/12
  CHECK(g.cov.xy == Catch::Approx(0.0).margin(1e-15));
}

TEST_CASE("rbox_to_gaussian quarter turn swaps the axes") {
  const GaussianBox g = rbox_to_gaussian({0, 0, 12, 6, kHalfPi});
  CHECK(g.cov.xx == Catch::Approx(3.0).margin(1e-12));
  CHECK(g.cov.yy == Catch::Approx(12.0).margin(1e-12));
  CHECK(g.cov.xy == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("square boxes are isotropic for every angle") {
  Rng rng(21);
  for (int i = 0; i < 50; ++i) {
    const double w = rng.uniform(2.0, 40.0);
    const double theta = rng.uniform(-5.0, 5.0);
    const GaussianBox g = rbox_to_gaussian({1, 2, w, w, theta});
    const double expected = w * w / 12.0;
    CHECK(g.cov.xx == Catch::Approx(expected).margin(1e-9));
    CHECK(g.cov.yy == Catch::Approx(expected).margin(1e-9));
    CHECK(g.cov.xy == Catch::Approx(0.0).margin(1e-9));
  }
}

TEST_CASE("rbox_to_gaussian determinant and positive definiteness") {
  Rng rng(22);
  for (int i = 0; i < 200; ++i) {
    const RotatedBox b = reference::random_box(rng);
    const GaussianBox g = rbox_to_gaussian(b);
    const double expected = b.w * b.w * b.h * b.h / 144.0;
    CHECK(det(g.cov) == Catch::Approx(expected).epsilon(1e-9));
    CHECK(g.cov.xx > 0.0);
    CHECK(det(g.cov) > 0.0);
  }
}

TEST_CASE("probiou_loss is zero with zero gradient at pred == gt") {
  const RotatedBox b{3, -1, 10, 4, 0.8};
  const LossGrad lg = probiou_loss(b, b);
  CHECK(lg.value == 0.0);
  for (double g : lg.grad) CHECK(g == 0.0);
}

TEST_CASE("probiou_loss closed-form offset case") {
  // Unit-covariance Gaussians (w = h = sqrt(12), theta = 0), centers 2 apart:
  // B_D = 1/8 * 2^2 = 0.5, loss = sqrt(1 - exp(-0.5)).
  const double side = std::sqrt(12.0);
  const LossGrad lg = probiou_loss({0, 0, side, side, 0}, {2, 0, side, side, 0});
  const double expected = std::sqrt(1.0 - std::exp(-0.5));
  CHECK(lg.value == Catch::Approx(expected).margin(1e-12));
  CHECK(expected == Catch::Approx(0.6272713359).margin(1e-9));
}

TEST_CASE("probiou_loss cannot see the angle of square boxes") {
  Rng rng(23);
  const RotatedBox pred = reference::random_box(rng);
  const double base = probiou_loss(pred, {0, 0, 9, 9, 0}).value;
  for (double theta : {0.1, 0.5, 1.0, kHalfPi}) {
    CHECK(probiou_loss(pred, {0, 0, 9, 9, theta}).value == Catch::Approx(base).margin(1e-9));
  }
}

TEST_CASE("probiou_loss is symmetric") {
  Rng rng(24);
  for (int i = 0; i < 200; ++i) {
    const RotatedBox a = reference::random_box(rng, kLossDomain);
    const RotatedBox b = reference::random_box(rng, kLossDomain);
    CHECK(probiou_loss(a, b).value == Catch::Approx(probiou_loss(b, a).value).margin(1e-12));
  }
}

TEST_CASE("probiou_loss boundary continuity under edge exchange") {
  Rng rng(25);
  for (int i = 0; i < 100; ++i) {
    const RotatedBox pred = reference::random_box(rng);
    const RotatedBox gt = reference::random_box(rng);
    const RotatedBox swapped{gt.cx, gt.cy, gt.h, gt.w, gt.theta + kHalfPi};
    CHECK(probiou_loss(pred, gt).value ==
          Catch::Approx(probiou_loss(pred, swapped).value).margin(1e-9));
  }
}

TEST_CASE("probiou_loss grows monotonically along a translation ray") {
  const RotatedBox gt{0, 0, 10, 5, 0.6};
  double prev = -1.0;
  for (int step = 0; step <= 20; ++step) {
    const double d = 0.7 * step;
    const double value = probiou_loss({d * 0.8, d * 0.6, 10, 5, 0.6}, gt).value;
    CHECK(value > prev);
    prev = value;
  }
}

TEST_CASE("probiou_loss analytic gradient matches finite differences") {
  Rng rng(26);
  for (int i = 0; i < 50; ++i) {
    const RotatedBox pred = reference::random_box(rng, kLossDomain);
    const RotatedBox gt = reference::random_box(rng, kLossDomain);
    const LossGrad lg = probiou_loss(pred, gt);
    const auto fd = reference::central_difference(
        [&](const RotatedBox& b) { return probiou_loss(b, gt).value; }, pred);
    CHECK(fd_rel_error(lg.grad, fd) <= 1e-4);
  }
}

TEST_CASE("kld_loss basics") {
  const RotatedBox b{1, 1, 8, 3, 0.2};
  const LossGrad same = kld_loss(b, b);
  CHECK(same.value == 0.0);
  for (double g : same.grad) CHECK(g == 0.0);

  // Closed-form offset case: D = 2, loss = 1 - 1/(1 + ln 3).
  const double side = std::sqrt(12.0);
  const LossGrad lg = kld_loss({0, 0, side, side, 0}, {2, 0, side, side, 0});
  const double expected = 1.0 - 1.0 / (1.0 + std::log(3.0));
  CHECK(lg.value == Catch::Approx(expected).margin(1e-12));
  CHECK(expected == Catch::Approx(0.5234946660).margin(1e-9));
}

TEST_CASE("kld_loss is asymmetric for anisotropic pairs") {
  const RotatedBox a{0, 0, 20, 4, 0.3};
  const RotatedBox b{3, 1, 6, 5, 1.1};
  CHECK(kld_loss(a, b).value != kld_loss(b, a).value);
}

TEST_CASE("kld_loss reverse direction differs and both match finite differences") {
  Rng rng(27);
  for (int i = 0; i < 50; ++i) {
    const RotatedBox pred = reference::random_box(rng, kLossDomain);
    const RotatedBox gt = reference::random_box(rng, kLossDomain);
    for (const bool reverse : {false, true}) {
      const KldOptions opts{1.0, reverse};
      const LossGrad lg = kld_loss(pred, gt, opts);
      const auto fd = reference::central_difference(
          [&](const RotatedBox& b) { return kld_loss(b, gt, opts).value; }, pred);
      CHECK(fd_rel_error(lg.grad, fd) <= 1e-4);
    }
  }
  const RotatedBox a{0, 0, 20, 4, 0.3};
  const RotatedBox b{2, 1, 6, 5, 1.1};
  CHECK(kld_loss(a, b, {1.0, false}).value != kld_loss(a, b, {1.0, true}).value);
}

TEST_CASE("kld_loss tau controls the transform") {
  const double side = std::sqrt(12.0);
  const RotatedBox pred{0, 0, side, side, 0};
  const RotatedBox gt{2, 0, side, side, 0};
  const LossGrad tau2 = kld_loss(pred, gt, {2.0, false});
  CHECK(tau2.value == Catch::Approx(1.0 - 1.0 / (2.0 + std::log(3.0))).margin(1e-12));
}

TEST_CASE("loss values stay in [0, 1) and gradients finite") {
  Rng rng(28);
  for (int i = 0; i < 300; ++i) {
    const RotatedBox pred = reference::random_box(rng);
    const RotatedBox gt = reference::random_box(rng);
    for (const LossGrad& lg : {probiou_loss(pred, gt), kld_loss(pred, gt)}) {
      CHECK(lg.value >= 0.0);
      CHECK(lg.value < 1.0);
      for (double g : lg.grad) CHECK(std::isfinite(g));
    }
  }
}

TEST_CASE("losses reject invalid boxes") {
  CHECK_THROWS_AS(probiou_loss({0, 0, 0, 2, 0}, {0, 0, 2, 2, 0}), validation_error);
  CHECK_THROWS_AS(kld_loss({0, 0, 2, 2, 0}, {0, 0, 2, -3, 0}), validation_error);
}
