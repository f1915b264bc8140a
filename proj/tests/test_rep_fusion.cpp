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

#include "rotdet/reference.hpp"
#include "rotdet/rep_fusion.hpp"
#include "rotdet/rng.hpp"

using namespace rotdet;

namespace {

Conv2d random_conv(Rng& rng, int co, int ci, int k) {
  Conv2d conv;
  conv.weight = Tensor4(co, ci, k, k);
  for (double& v : conv.weight.v) v = rng.uniform(-1.0, 1.0);
  conv.bias.resize(static_cast<std::size_t>(co));
  for (double& v : conv.bias) v = rng.uniform(-0.5, 0.5);
  return conv;
}

BranchNorm random_norm(Rng& rng, int channels) {
  BranchNorm n;
  const auto c = static_cast<std::size_t>(channels);
  n.mean.resize(c);
  n.var.resize(c);
  n.gamma.resize(c);
  n.shift.resize(c);
  for (double& v : n.mean) v = rng.uniform(-1.0, 1.0);
  for (double& v : n.var) v = rng.uniform(0.5, 2.0);
  for (double& v : n.gamma) v = rng.uniform(0.5, 1.5);
  for (double& v : n.shift) v = rng.uniform(-1.0, 1.0);
  return n;
}

RepBranchWeights random_branch(Rng& rng, int channels, bool with_norm, bool with_identity) {
  RepBranchWeights w;
  w.conv3 = random_conv(rng, channels, channels, 3);
  w.conv1 = random_conv(rng, channels, channels, 1);
  w.alpha1 = rng.uniform(-1.5, 1.5);
  if (with_identity) w.alpha2 = rng.uniform(-1.5, 1.5);
  if (with_norm) {
    w.norm3 = random_norm(rng, channels);
    w.norm1 = random_norm(rng, channels);
    if (with_identity) w.norm_id = random_norm(rng, channels);
  }
  return w;
}

Tensor4 random_input(Rng& rng, int n, int c, int hw) {
  Tensor4 x(n, c, hw, hw);
  for (double& v : x.v) v = rng.uniform(-1.0, 1.0);
  return x;
}

double max_abs_diff(const Tensor4& a, const Tensor4& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a.v[i] - b.v[i]));
  return worst;
}

}  // namespace

TEST_CASE("conv2d_direct identity center tap") {
  Rng rng(51);
  Conv2d conv;
  conv.weight = Tensor4(2, 2, 3, 3);
  conv.weight.at(0, 0, 1, 1) = 1.0;
  conv.weight.at(1, 1, 1, 1) = 1.0;
  conv.bias = {0.0, 0.0};
  const Tensor4 x = random_input(rng, 1, 2, 6);
  CHECK(max_abs_diff(conv2d_direct(conv, x), x) == 0.0);
}

TEST_CASE("conv2d_direct all-ones kernel sums the 3x3 neighborhood") {
  Conv2d conv;
  conv.weight = Tensor4(1, 1, 3, 3);
  for (double& v : conv.weight.v) v = 1.0;
  conv.bias = {0.0};
  Tensor4 x(1, 1, 5, 5);
  for (double& v : x.v) v = 1.0;
  const Tensor4 y = conv2d_direct(conv, x);
  CHECK(y.at(0, 0, 2, 2) == 9.0);   // interior
  CHECK(y.at(0, 0, 0, 0) == 4.0);   // corner sees a 2x2 window
  CHECK(y.at(0, 0, 0, 2) == 6.0);   // edge sees a 2x3 window
}

TEST_CASE("conv2d_direct equals the scatter-order reference") {
  Rng rng(52);
  for (int trial = 0; trial < 20; ++trial) {
    const int co = 1 + rng.uniform_int(0, 3);
    const int ci = 1 + rng.uniform_int(0, 3);
    const int k = trial % 2 == 0 ? 3 : 1;
    const Conv2d conv = random_conv(rng, co, ci, k);
    const Tensor4 x = random_input(rng, 1 + trial % 2, ci, 5 + trial % 3);
    CHECK(max_abs_diff(conv2d_direct(conv, x), reference::conv2d_scatter(conv, x)) <= 1e-12);
  }
}

TEST_CASE("conv2d_direct validates shapes") {
  Rng rng(53);
  const Conv2d conv = random_conv(rng, 2, 3, 3);
  const Tensor4 wrong = random_input(rng, 1, 2, 5);
  CHECK_THROWS_AS(conv2d_direct(conv, wrong), validation_error);

  Conv2d even;
  even.weight = Tensor4(1, 1, 2, 2);
  even.bias = {0.0};
  CHECK_THROWS_AS(conv2d_direct(even, random_input(rng, 1, 1, 5)), validation_error);
}

TEST_CASE("branch_forward with unit gates equals the ungated sum") {
  Rng rng(54);
  RepBranchWeights w = random_branch(rng, 4, false, true);
  w.alpha1 = 1.0;
  w.alpha2 = 1.0;
  const Tensor4 x = random_input(rng, 1, 4, 6);
  const Tensor4 y = branch_forward(w, x);
  // Independent evaluation of f(x) + g(x) + x.
  const Tensor4 f = conv2d_direct(w.conv3, x);
  const Tensor4 g = conv2d_direct(w.conv1, x);
  Tensor4 manual = f;
  for (std::size_t i = 0; i < manual.size(); ++i) manual.v[i] += g.v[i] + x.v[i];
  CHECK(max_abs_diff(y, manual) <= 1e-12);
}

TEST_CASE("branch_forward with gates off broadcasts the 3x3 bias") {
  RepBranchWeights w;
  w.conv3.weight = Tensor4(2, 2, 3, 3);  // zero kernel
  w.conv3.bias = {0.25, -1.5};
  w.conv1.weight = Tensor4(2, 2, 1, 1);
  w.conv1.bias = {9.0, 9.0};  // gated off
  w.alpha1 = 0.0;
  const Tensor4 x = [] {
    Rng rng(55);
    return random_input(rng, 1, 2, 4);
  }();
  const Tensor4 y = branch_forward(w, x);
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      CHECK(y.at(0, 0, i, j) == 0.25);
      CHECK(y.at(0, 1, i, j) == -1.5);
    }
  }
}

TEST_CASE("branch_forward matches a direct-convolution oracle sum") {
  Rng rng(56);
  RepBranchWeights w = random_branch(rng, 4, true, true);
  const Tensor4 x = random_input(rng, 1, 4, 5);
  const Tensor4 y = branch_forward(w, x);

  // Oracle: scatter-order convs + explicit normalization arithmetic.
  const auto normed = [&](Tensor4 t, const std::optional<BranchNorm>& n) {
    if (!n) return t;
    for (int b = 0; b < t.dim[0]; ++b) {
      for (int c = 0; c < t.dim[1]; ++c) {
        for (int i = 0; i < t.dim[2]; ++i) {
          for (int j = 0; j < t.dim[3]; ++j) {
            const auto ci = static_cast<std::size_t>(c);
            t.at(b, c, i, j) = n->gamma[ci] * (t.at(b, c, i, j) - n->mean[ci]) /
                                   std::sqrt(n->var[ci] + n->eps) +
                               n->shift[ci];
          }
        }
      }
    }
    return t;
  };
  const Tensor4 f = normed(reference::conv2d_scatter(w.conv3, x), w.norm3);
  const Tensor4 g = normed(reference::conv2d_scatter(w.conv1, x), w.norm1);
  const Tensor4 id = normed(x, w.norm_id);
  Tensor4 manual = f;
  for (std::size_t i = 0; i < manual.size(); ++i) {
    manual.v[i] += w.alpha1 * g.v[i] + *w.alpha2 * id.v[i];
  }
  CHECK(max_abs_diff(y, manual) <= 1e-10);
}

TEST_CASE("fuse with gates at zero reduces to the folded 3x3 branch") {
  Rng rng(57);
  RepBranchWeights w = random_branch(rng, 3, true, true);
  w.alpha1 = 0.0;
  w.alpha2 = 0.0;
  const FusedConv fused = fuse(w);
  for (int oc = 0; oc < 3; ++oc) {
    const auto c = static_cast<std::size_t>(oc);
    const double scale = w.norm3->gamma[c] / std::sqrt(w.norm3->var[c] + w.norm3->eps);
    for (int ic = 0; ic < 3; ++ic) {
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          CHECK(fused.kernel.at(oc, ic, ky, kx) ==
                Catch::Approx(scale * w.conv3.weight.at(oc, ic, ky, kx)).margin(1e-12));
        }
      }
    }
    CHECK(fused.bias[c] ==
          Catch::Approx((w.conv3.bias[c] - w.norm3->mean[c]) * scale + w.norm3->shift[c])
              .margin(1e-12));
  }
}

TEST_CASE("fuse builds an identity map from a per-channel identity 1x1") {
  Rng rng(58);
  RepBranchWeights w;
  w.conv3.weight = Tensor4(3, 3, 3, 3);  // zero
  w.conv3.bias = {0, 0, 0};
  w.conv1.weight = Tensor4(3, 3, 1, 1);
  for (int c = 0; c < 3; ++c) w.conv1.weight.at(c, c, 0, 0) = 1.0;
  w.conv1.bias = {0, 0, 0};
  w.alpha1 = 1.0;
  const Tensor4 x = random_input(rng, 2, 3, 5);
  CHECK(max_abs_diff(run_fused(fuse(w), x), x) == 0.0);
}

TEST_CASE("fusion equivalence over random weight sets") {
  Rng rng(59);
  const int channel_options[] = {1, 4, 8};
  for (int k = 0; k < 30; ++k) {
    const int channels = channel_options[k % 3];
    RepBranchWeights w = random_branch(rng, channels, k % 2 == 0, k % 3 != 2);
    const Tensor4 x = random_input(rng, 1 + k % 2, channels, 5 + k % 3);
    const double err = max_abs_diff(branch_forward(w, x), run_fused(fuse(w), x));
    CHECK(err <= 1e-5);
  }
}

TEST_CASE("fused kernel is affine in the gates") {
  Rng rng(60);
  RepBranchWeights w = random_branch(rng, 4, true, true);
  const auto kernel_at = [&](double a1, double a2) {
    RepBranchWeights ww = w;
    ww.alpha1 = a1;
    ww.alpha2 = a2;
    return fuse(ww);
  };
  const FusedConv k0 = kernel_at(0.0, 0.5);
  const FusedConv k1 = kernel_at(1.0, 0.5);
  const FusedConv k2 = kernel_at(2.0, 0.5);
  for (std::size_t i = 0; i < k0.kernel.size(); ++i) {
    const double d1 = k1.kernel.v[i] - k0.kernel.v[i];
    const double d2 = k2.kernel.v[i] - k1.kernel.v[i];
    CHECK(std::abs(d1 - d2) <= 1e-12);
  }
  const FusedConv m0 = kernel_at(0.7, 0.0);
  const FusedConv m1 = kernel_at(0.7, 1.0);
  const FusedConv m2 = kernel_at(0.7, 2.0);
  for (std::size_t i = 0; i < m0.kernel.size(); ++i) {
    const double d1 = m1.kernel.v[i] - m0.kernel.v[i];
    const double d2 = m2.kernel.v[i] - m1.kernel.v[i];
    CHECK(std::abs(d1 - d2) <= 1e-12);
  }
}

TEST_CASE("fused size does not depend on the gates") {
  Rng rng(61);
  const RepBranchWeights gated = random_branch(rng, 4, true, true);
  RepBranchWeights ungated = gated;
  ungated.alpha1 = 1.0;
  ungated.alpha2 = 1.0;
  const FusedConv a = fuse(gated);
  const FusedConv b = fuse(ungated);
  CHECK(a.kernel.size() == b.kernel.size());
  CHECK(a.bias.size() == b.bias.size());
  CHECK(a.kernel.dim == std::array<int, 4>{4, 4, 3, 3});
}

TEST_CASE("identity branch requires matching channels") {
  Rng rng(62);
  RepBranchWeights w;
  w.conv3 = random_conv(rng, 2, 4, 3);
  w.conv1 = random_conv(rng, 2, 4, 1);
  w.alpha2 = 1.0;
  CHECK_THROWS_AS(fuse(w), validation_error);
  CHECK_THROWS_AS(branch_forward(w, random_input(rng, 1, 4, 5)), validation_error);
  w.alpha2.reset();
  CHECK_NOTHROW(fuse(w));
}
