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

#pragma once

// Numerical verification suite behind the `selfcheck` CLI command and the
// acceptance tests: every check compares a primary implementation against
// an independent oracle or a protocol-exact fixture at a pinned tolerance.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <set>
#include <string>
#include <vector>

#include "rotdet/angle_dfl.hpp"
#include "rotdet/assign.hpp"
#include "rotdet/dota.hpp"
#include "rotdet/gaussian.hpp"
#include "rotdet/geometry.hpp"
#include "rotdet/postprocess.hpp"
#include "rotdet/reference.hpp"
#include "rotdet/rep_fusion.hpp"
#include "rotdet/rng.hpp"

namespace rotdet::selfcheck {

struct CheckResult {
  std::string name;
  bool passed = false;
  double max_error = 0.0;
  double limit = 0.0;
  std::string detail;
  double seconds = 0.0;
};

enum class Fault {
  none,
  probiou_grad_sign,  // flips the analytic gradient inside the FD check
};

namespace detail {

class Timer {
 public:
  Timer() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

inline double rel_error(double a, double b) {
  // Central differences cannot resolve entries below ~1e-9 absolute, so the
  // denominator is floored; see the gradient check's documentation.
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-4});
}

}  // namespace detail

/// SkewIoU against a 10^6-sample Monte Carlo estimate on 100 random pairs
/// (limit 5e-3), plus the analytic unit-square-vs-45-degrees case 1/sqrt(2)
/// (limit 1e-9).
inline CheckResult check_skew_iou_mc(std::uint64_t seed) {
  detail::Timer timer;
  CheckResult r{"skew-iou-monte-carlo", false, 0.0, 5e-3, "", 0.0};
  Rng rng(seed * 7919 + 1);
  for (int k = 0; k < 100; ++k) {
    const RotatedBox a = reference::random_box(rng);
    const RotatedBox b = reference::random_box(rng);
    const double exact = skew_iou(a, b);
    const double mc = reference::mc_skew_iou(a, b, 1000000, rng);
    r.max_error = std::max(r.max_error, std::abs(exact - mc));
  }
  const double diag = skew_iou({0, 0, 1, 1, 0}, {0, 0, 1, 1, kPi / 4});
  const double diag_err = std::abs(diag - 1.0 / std::sqrt(2.0));
  r.passed = r.max_error <= r.limit && diag_err <= 1e-9;
  char buf[128];
  std::snprintf(buf, sizeof(buf), "45deg-case err %.3e (limit 1e-9)", diag_err);
  r.detail = buf;
  r.seconds = timer.seconds();
  return r;
}

/// ProbIoU and KLD analytic gradients against central finite differences
/// (h = 1e-5) over 200 random pairs; max relative error <= 1e-4 with the
/// denominator floored at 1e-4.
inline CheckResult check_loss_gradients(std::uint64_t seed, Fault fault = Fault::none) {
  detail::Timer timer;
  CheckResult r{"loss-gradients-fd", false, 0.0, 1e-4, "", 0.0};
  Rng rng(seed * 104729 + 2);
  const reference::BoxDomain domain{-8.0, 8.0, 4.0, 30.0, 0.0, kHalfPi};
  const double flip = fault == Fault::probiou_grad_sign ? -1.0 : 1.0;
  for (int k = 0; k < 200; ++k) {
    const RotatedBox pred = reference::random_box(rng, domain);
    const RotatedBox gt = reference::random_box(rng, domain);

    const LossGrad pi = probiou_loss(pred, gt);
    const auto fd_pi = reference::central_difference(
        [&](const RotatedBox& b) { return probiou_loss(b, gt).value; }, pred);
    for (int i = 0; i < 5; ++i) {
      r.max_error = std::max(r.max_error,
                             detail::rel_error(flip * pi.grad[static_cast<std::size_t>(i)],
                                               fd_pi[static_cast<std::size_t>(i)]));
    }

    for (const bool reverse : {false, true}) {
      const KldOptions opts{1.0, reverse};
      const LossGrad kl = kld_loss(pred, gt, opts);
      const auto fd_kl = reference::central_difference(
          [&](const RotatedBox& b) { return kld_loss(b, gt, opts).value; }, pred);
      for (int i = 0; i < 5; ++i) {
        r.max_error = std::max(r.max_error, detail::rel_error(kl.grad[static_cast<std::size_t>(i)],
                                                              fd_kl[static_cast<std::size_t>(i)]));
      }
    }
  }
  r.passed = r.max_error <= r.limit;
  r.detail = "probiou + kld forward/reverse, 200 pairs";
  r.seconds = timer.seconds();
  return r;
}

/// The boundary-discontinuity probe: for random (pred, gt), the loss against
/// the edge-exchanged gt (cx, cy, h, w, theta + pi/2) must agree to 1e-9.
inline CheckResult check_boundary_continuity(std::uint64_t seed) {
  detail::Timer timer;
  CheckResult r{"boundary-continuity", false, 0.0, 1e-9, "", 0.0};
  Rng rng(seed * 15485863 + 3);
  for (int k = 0; k < 100; ++k) {
    const RotatedBox pred = reference::random_box(rng);
    const RotatedBox gt = reference::random_box(rng);
    const RotatedBox swapped{gt.cx, gt.cy, gt.h, gt.w, gt.theta + kHalfPi};
    r.max_error = std::max(r.max_error,
                           std::abs(probiou_loss(pred, gt).value - probiou_loss(pred, swapped).value));
  }
  r.passed = r.max_error <= r.limit;
  r.detail = "100 random pairs, edge-exchanged gt";
  r.seconds = timer.seconds();
  return r;
}

/// Square boxes have isotropic Gaussian covariance, so probiou_loss must be
/// invariant to the gt angle (limit 1e-9) while dfl_loss on the same angles
/// must not be (spread >= 1e-3) - the reason the angle head exists.
inline CheckResult check_square_degeneracy(std::uint64_t seed) {
  detail::Timer timer;
  CheckResult r{"square-angle-degeneracy", false, 0.0, 1e-9, "", 0.0};
  Rng rng(seed * 32452843 + 4);
  const double angles[] = {0.0, 0.2, 0.5, 0.9, 1.3, kHalfPi};
  double dfl_spread_min = 1e300;
  for (int k = 0; k < 20; ++k) {
    const double size = rng.uniform(5.0, 30.0);
    const double cx = rng.uniform(-10.0, 10.0), cy = rng.uniform(-10.0, 10.0);
    const RotatedBox pred = reference::random_box(rng);
    double lo = 1e300, hi = -1e300;
    for (double a : angles) {
      const double v = probiou_loss(pred, {cx, cy, size, size, a}).value;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    r.max_error = std::max(r.max_error, hi - lo);

    std::array<double, kAngleBins> logits{};
    for (double& v : logits) v = rng.normal();
    double dlo = 1e300, dhi = -1e300;
    for (double a : angles) {
      const double v = dfl_loss(logits, encode_angle(a)).value;
      dlo = std::min(dlo, v);
      dhi = std::max(dhi, v);
    }
    dfl_spread_min = std::min(dfl_spread_min, dhi - dlo);
  }
  r.passed = r.max_error <= r.limit && dfl_spread_min >= 1e-3;
  char buf[128];
  std::snprintf(buf, sizeof(buf), "min dfl loss spread %.3e (must be >= 1e-3)", dfl_spread_min);
  r.detail = buf;
  r.seconds = timer.seconds();
  return r;
}

/// Angle codec: encode/decode round trip on 1000 random angles (limit
/// 1e-12) and the uniform distribution decoding to pi/4 (limit 1e-15).
inline CheckResult check_angle_codec(std::uint64_t seed) {
  detail::Timer timer;
  CheckResult r{"angle-codec", false, 0.0, 1e-12, "", 0.0};
  Rng rng(seed * 49979687 + 5);
  for (int k = 0; k < 1000; ++k) {
    const double theta = rng.uniform(0.0, kHalfPi);
    const double back = decode_angle(to_distribution(encode_angle(theta)));
    r.max_error = std::max(r.max_error, std::abs(back - theta));
  }
  AngleDistribution uniform;
  for (double& p : uniform.p) p = 1.0 / kAngleBins;
  const double uniform_err = std::abs(decode_angle(uniform) - kPi / 4.0);
  r.passed = r.max_error <= r.limit && uniform_err <= 1e-15;
  char buf[128];
  std::snprintf(buf, sizeof(buf), "uniform-decode err %.3e (limit 1e-15)", uniform_err);
  r.detail = buf;
  r.seconds = timer.seconds();
  return r;
}

namespace detail {

inline RepBranchWeights random_branch(Rng& rng, int channels, bool with_norm, bool with_identity) {
  RepBranchWeights w;
  w.conv3.weight = Tensor4(channels, channels, 3, 3);
  w.conv1.weight = Tensor4(channels, channels, 1, 1);
  for (double& v : w.conv3.weight.v) v = rng.uniform(-1.0, 1.0);
  for (double& v : w.conv1.weight.v) v = rng.uniform(-1.0, 1.0);
  w.conv3.bias.resize(static_cast<std::size_t>(channels));
  w.conv1.bias.resize(static_cast<std::size_t>(channels));
  for (double& v : w.conv3.bias) v = rng.uniform(-0.5, 0.5);
  for (double& v : w.conv1.bias) v = rng.uniform(-0.5, 0.5);
  w.alpha1 = rng.uniform(-1.5, 1.5);
  if (with_identity) w.alpha2 = rng.uniform(-1.5, 1.5);
  if (with_norm) {
    const auto random_norm = [&]() {
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
    };
    w.norm3 = random_norm();
    w.norm1 = random_norm();
    if (with_identity) w.norm_id = random_norm();
  }
  return w;
}

// Ungated re-parameterization of y = f(x) + g(x) + x, written from the
// plain formula (no gate terms) as an independent route for the gate=1 case.
inline FusedConv plain_fuse(const RepBranchWeights& w) {
  const int co = w.conv3.weight.dim[0], ci = w.conv3.weight.dim[1];
  FusedConv fused;
  fused.kernel = Tensor4(co, ci, 3, 3);
  fused.bias.assign(static_cast<std::size_t>(co), 0.0);
  const auto scale_of = [](const std::optional<BranchNorm>& n, int c) {
    return n ? n->gamma[static_cast<std::size_t>(c)] / std::sqrt(n->var[static_cast<std::size_t>(c)] + n->eps) : 1.0;
  };
  const auto bias_of = [&](const std::optional<BranchNorm>& n, int c, double raw) {
    return n ? (raw - n->mean[static_cast<std::size_t>(c)]) * scale_of(n, c) + n->shift[static_cast<std::size_t>(c)] : raw;
  };
  for (int oc = 0; oc < co; ++oc) {
    for (int ic = 0; ic < ci; ++ic) {
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          fused.kernel.at(oc, ic, ky, kx) = scale_of(w.norm3, oc) * w.conv3.weight.at(oc, ic, ky, kx);
        }
      }
      fused.kernel.at(oc, ic, 1, 1) += scale_of(w.norm1, oc) * w.conv1.weight.at(oc, ic, 0, 0);
    }
    fused.kernel.at(oc, oc, 1, 1) += scale_of(w.norm_id, oc);
    fused.bias[static_cast<std::size_t>(oc)] =
        bias_of(w.norm3, oc, w.conv3.bias[static_cast<std::size_t>(oc)]) +
        bias_of(w.norm1, oc, w.conv1.bias[static_cast<std::size_t>(oc)]) +
        bias_of(w.norm_id, oc, 0.0);
  }
  return fused;
}

}  // namespace detail

/// Fused conv vs branched forward (limit 1e-5 max abs) over 100 random
/// weight sets with and without normalization folding; the alpha = 1 case
/// must also match an independently written ungated fusion (1e-12).
inline CheckResult check_rep_fusion(std::uint64_t seed) {
  detail::Timer timer;
  CheckResult r{"rep-fusion-equivalence", false, 0.0, 1e-5, "", 0.0};
  Rng rng(seed * 67867967 + 6);
  const int channel_options[] = {1, 4, 8};
  double plain_err = 0.0;
  for (int k = 0; k < 100; ++k) {
    const int channels = channel_options[k % 3];
    const bool with_norm = k % 2 == 0;
    const bool with_identity = k % 3 != 2;
    RepBranchWeights w = detail::random_branch(rng, channels, with_norm, with_identity);
    const int n = 1 + k % 2, hw = 5 + k % 3;
    Tensor4 x(n, channels, hw, hw);
    for (double& v : x.v) v = rng.uniform(-1.0, 1.0);

    const Tensor4 branched = branch_forward(w, x);
    const Tensor4 fused = run_fused(fuse(w), x);
    for (std::size_t i = 0; i < branched.size(); ++i) {
      r.max_error = std::max(r.max_error, std::abs(branched.v[i] - fused.v[i]));
    }

    if (with_identity) {
      RepBranchWeights gated = w;
      gated.alpha1 = 1.0;
      gated.alpha2 = 1.0;
      const FusedConv a = fuse(gated);
      const FusedConv b = detail::plain_fuse(gated);
      for (std::size_t i = 0; i < a.kernel.size(); ++i) {
        plain_err = std::max(plain_err, std::abs(a.kernel.v[i] - b.kernel.v[i]));
      }
      for (std::size_t i = 0; i < a.bias.size(); ++i) {
        plain_err = std::max(plain_err, std::abs(a.bias[i] - b.bias[i]));
      }
    }
  }
  r.passed = r.max_error <= r.limit && plain_err <= 1e-12;
  char buf[128];
  std::snprintf(buf, sizeof(buf), "gate=1 vs plain fusion err %.3e (limit 1e-12)", plain_err);
  r.detail = buf;
  r.seconds = timer.seconds();
  return r;
}

/// Task-aligned assignment against the exhaustive oracle on small grids
/// (4x4 and 8x8, up to 3 gts, 20 random draws) plus the direct-arithmetic
/// spot value t = 0.9 * 0.5^6.
inline CheckResult check_tal_oracle(std::uint64_t seed) {
  detail::Timer timer;
  CheckResult r{"tal-assignment-oracle", false, 0.0, 0.0, "", 0.0};
  Rng rng(seed * 86028121 + 7);
  int mismatches = 0;
  for (int draw = 0; draw < 20; ++draw) {
    const int image = draw % 2 == 0 ? 32 : 64;  // 4x4 and 8x8 grids at stride 8
    const int strides[] = {8};
    const AnchorPointGrid grid = build_anchor_points(image, image, strides);
    AssignmentInput in;
    in.num_classes = 3;
    const int num_gt = 1 + rng.uniform_int(0, 2);
    for (int g = 0; g < num_gt; ++g) {
      in.gt_boxes.push_back({rng.uniform(6.0, image - 6.0), rng.uniform(6.0, image - 6.0),
                             rng.uniform(8.0, image * 0.8), rng.uniform(8.0, image * 0.8),
                             rng.uniform(0.0, kPi)});
      in.gt_labels.push_back(rng.uniform_int(0, 2));
    }
    for (int i = 0; i < grid.total(); ++i) {
      const Vec2 p = grid.point(i).pos;
      in.pred_boxes.push_back({p.x + rng.uniform(-4.0, 4.0), p.y + rng.uniform(-4.0, 4.0),
                               rng.uniform(4.0, 20.0), rng.uniform(4.0, 20.0),
                               rng.uniform(0.0, kPi)});
      for (int c = 0; c < in.num_classes; ++c) in.pred_scores.push_back(rng.uniform());
    }
    const TalParams params{1.0, 6.0, 4};
    const AssignmentResult got = rotated_tal_assign(in, grid, params);
    const AssignmentResult want = reference::tal_assign_exhaustive(in, grid, params);
    if (got.assigned_gt != want.assigned_gt || got.alignment != want.alignment ||
        got.soft_target != want.soft_target) {
      ++mismatches;
    }
  }

  // Spot fixture: one point inside the gt, s = 0.9, mu = 0.5 exactly.
  const int strides[] = {32};
  const AnchorPointGrid grid = build_anchor_points(32, 32, strides);
  AssignmentInput in;
  in.num_classes = 1;
  in.gt_boxes.push_back({16, 16, 8, 4, 0});
  in.gt_labels.push_back(0);
  in.pred_boxes.push_back({16, 16, 4, 4, 0});
  in.pred_scores.push_back(0.9);
  const AssignmentResult spot = rotated_tal_assign(in, grid, {1.0, 6.0, 13});
  const double spot_err = std::abs(spot.alignment[0] - 0.0140625);
  r.max_error = mismatches;
  r.passed = mismatches == 0 && spot.assigned_gt[0] == 0 && spot_err <= 1e-12;
  char buf[128];
  std::snprintf(buf, sizeof(buf), "oracle mismatches %d/20, spot |t - 0.0140625| = %.3e",
                mismatches, spot_err);
  r.detail = buf;
  r.seconds = timer.seconds();
  return r;
}

/// Rotated NMS keep-set equality against the O(n^2) reference on 50 random
/// scenes of 50 boxes, plus idempotence.
inline CheckResult check_nms_oracle(std::uint64_t seed) {
  detail::Timer timer;
  CheckResult r{"rotated-nms-oracle", false, 0.0, 0.0, "", 0.0};
  Rng rng(seed * 22801763 + 8);
  const auto same = [](const std::vector<Detection>& a, const std::vector<Detection>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a[i].score != b[i].score || a[i].class_id != b[i].class_id ||
          a[i].box.cx != b[i].box.cx || a[i].box.cy != b[i].box.cy ||
          a[i].box.w != b[i].box.w || a[i].box.h != b[i].box.h ||
          a[i].box.theta != b[i].box.theta) {
        return false;
      }
    }
    return true;
  };
  int mismatches = 0;
  for (int scene = 0; scene < 50; ++scene) {
    std::vector<Detection> dets;
    for (int i = 0; i < 50; ++i) {
      dets.push_back({{rng.uniform(0.0, 100.0), rng.uniform(0.0, 100.0), rng.uniform(5.0, 30.0),
                       rng.uniform(5.0, 30.0), rng.uniform(0.0, kPi)},
                      rng.uniform(),
                      rng.uniform_int(0, 2)});
    }
    const bool class_aware = scene % 2 == 0;
    const std::vector<Detection> kept = rotated_nms(dets, 0.3, class_aware);
    const std::vector<Detection> want = reference::brute_force_nms(dets, 0.3, class_aware);
    const std::vector<Detection> again = rotated_nms(kept, 0.3, class_aware);
    if (!same(kept, want) || !same(kept, again)) ++mismatches;
  }
  r.max_error = mismatches;
  r.passed = mismatches == 0;
  r.detail = "50 scenes x 50 boxes, keep-set + idempotence";
  r.seconds = timer.seconds();
  return r;
}

/// Tiling protocol fixtures: the 4000x4000 single-scale plan must produce
/// exactly the offsets {0,768,1536,2304,2976} per axis (25 tiles); the
/// multi-scale preset must produce three scale groups with stride 524.
inline CheckResult check_tile_protocol(std::uint64_t) {
  detail::Timer timer;
  CheckResult r{"tile-protocol", false, 0.0, 0.0, "", 0.0};
  int failures = 0;

  const std::vector<long> want = {0, 768, 1536, 2304, 2976};
  if (dota::tile_offsets(4000, 1024, 256) != want) ++failures;
  if (dota::plan_tiles(4000, 4000, dota::dota_ss()).size() != 25) ++failures;

  const dota::TileSpec ms = dota::dota_ms();
  if (ms.scales != std::vector<double>{0.5, 1.0, 1.5} || ms.patch_size - ms.overlap != 524) {
    ++failures;
  }
  const std::vector<dota::Tile> tiles = dota::plan_tiles(4000, 4000, ms);
  std::set<double> scales;
  for (const dota::Tile& t : tiles) scales.insert(t.scale);
  if (scales != std::set<double>{0.5, 1.0, 1.5}) ++failures;
  for (double scale : {0.5, 1.0, 1.5}) {
    const long scaled = std::lround(4000 * scale);
    const std::vector<long> offs = dota::tile_offsets(scaled, ms.patch_size, ms.overlap);
    for (std::size_t i = 0; i + 2 < offs.size(); ++i) {
      if (offs[i + 1] - offs[i] != 524) ++failures;  // all but the clamped tail
    }
    if (offs.back() + ms.patch_size != scaled) ++failures;
    if (offs.front() != 0) ++failures;
  }
  r.max_error = failures;
  r.passed = failures == 0;
  r.detail = "dota-ss offsets + dota-ms stride 524";
  r.seconds = timer.seconds();
  return r;
}

/// Evaluator fixtures: the hand-enumerated 3-detection curve (AP = 5/6),
/// a perfect-detection scene (mAP exactly 1), and the difficulty-1 rules.
inline CheckResult check_eval_fixtures(std::uint64_t) {
  detail::Timer timer;
  CheckResult r{"eval-fixtures", false, 0.0, 1e-6, "", 0.0};
  const std::vector<std::string>& cats = dota::dota15_categories();
  const auto annotate = [](const RotatedBox& b, const std::string& cat, int difficulty) {
    return dota::Annotation{rbox_to_quad(b), cat, difficulty};
  };

  // 2 gts; detections TP@0.9, FP@0.8, TP@0.7 -> PR (1,0.5),(0.5,0.5),(2/3,1).
  std::map<std::string, std::vector<dota::Annotation>> gts;
  gts["img1"] = {annotate({10, 10, 8, 6, 0}, "plane", 0), annotate({40, 40, 8, 6, 0}, "plane", 0)};
  std::map<std::string, std::vector<Detection>> dets;
  dets["img1"] = {{{10, 10, 8, 6, 0}, 0.9, 0}, {{70, 70, 8, 6, 0}, 0.8, 0}, {{40, 40, 8, 6, 0}, 0.7, 0}};
  const dota::EvalReport hand = dota::evaluate_map(gts, dets, cats, 0.5);
  const double ap_err = std::abs(hand.per_class[0].ap - 5.0 / 6.0);
  r.max_error = ap_err;

  // Perfect detections over two classes.
  std::map<std::string, std::vector<dota::Annotation>> gts2;
  gts2["a"] = {annotate({10, 10, 8, 6, 0.3}, "plane", 0), annotate({40, 40, 12, 6, 1.0}, "ship", 0)};
  std::map<std::string, std::vector<Detection>> dets2;
  dets2["a"] = {{{10, 10, 8, 6, 0.3}, 0.9, 0}, {{40, 40, 12, 6, 1.0}, 0.8, 6}};
  const dota::EvalReport perfect = dota::evaluate_map(gts2, dets2, cats, 0.5);
  const bool perfect_ok = std::abs(perfect.map - 1.0) <= 1e-12;

  // Difficulty-1 gt: its (top-scored) detection is ignored, and it does not
  // count in the gt total, so AP must still be exactly 1.
  std::map<std::string, std::vector<dota::Annotation>> gts3;
  gts3["a"] = {annotate({10, 10, 8, 6, 0}, "plane", 0), annotate({40, 40, 8, 6, 0}, "plane", 1)};
  std::map<std::string, std::vector<Detection>> dets3;
  dets3["a"] = {{{40, 40, 8, 6, 0}, 0.9, 0}, {{10, 10, 8, 6, 0}, 0.8, 0}};
  const dota::EvalReport difficult = dota::evaluate_map(gts3, dets3, cats, 0.5);
  const bool difficult_ok = difficult.per_class[0].num_gt == 1 &&
                            std::abs(difficult.per_class[0].ap - 1.0) <= 1e-12;

  r.passed = ap_err <= r.limit && perfect_ok && difficult_ok;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "|AP - 5/6| = %.3e, perfect mAP %.12f, difficult AP %.12f",
                ap_err, perfect.map, difficult.per_class[0].ap);
  r.detail = buf;
  r.seconds = timer.seconds();
  return r;
}

/// Runs the checks (optionally a single one by name) with the given seed.
inline std::vector<CheckResult> run_selfcheck(std::uint64_t seed, Fault fault = Fault::none,
                                              const std::string& only = "") {
  using CheckFn = CheckResult (*)(std::uint64_t);
  struct Entry {
    const char* name;
    CheckFn fn;
  };
  // The gradient check takes the fault parameter and is dispatched apart.
  const Entry entries[] = {
      {"skew-iou-monte-carlo", &check_skew_iou_mc},
      {"boundary-continuity", &check_boundary_continuity},
      {"square-angle-degeneracy", &check_square_degeneracy},
      {"angle-codec", &check_angle_codec},
      {"rep-fusion-equivalence", &check_rep_fusion},
      {"tal-assignment-oracle", &check_tal_oracle},
      {"rotated-nms-oracle", &check_nms_oracle},
      {"tile-protocol", &check_tile_protocol},
      {"eval-fixtures", &check_eval_fixtures},
  };
  std::vector<CheckResult> results;
  if (only.empty() || only == "loss-gradients-fd") {
    results.push_back(check_loss_gradients(seed, fault));
  }
  for (const Entry& e : entries) {
    if (!only.empty() && only != e.name) continue;
    results.push_back(e.fn(seed));
  }
  if (results.empty()) {
    throw validation_error("unknown selfcheck name: " + only);
  }
  return results;
}

inline bool all_passed(const std::vector<CheckResult>& results) {
  for (const CheckResult& r : results) {
    if (!r.passed) return false;
  }
  return true;
}

}  // namespace rotdet::selfcheck
