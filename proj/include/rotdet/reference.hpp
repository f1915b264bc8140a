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

// Reference implementations used as verification oracles by the selfcheck
// command and the test suites. Each deliberately takes a different
// computational route than the primary implementation it is compared
// against (sampling instead of clipping, finite differences instead of the
// chain rule, exhaustive scans instead of sorted selection).

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include "rotdet/assign.hpp"
#include "rotdet/geometry.hpp"
#include "rotdet/postprocess.hpp"
#include "rotdet/rep_fusion.hpp"
#include "rotdet/rng.hpp"

namespace rotdet::reference {

/// Cross-product containment test against corners computed from scratch.
inline bool point_in_box_cross_test(Vec2 p, const RotatedBox& b) {
  const double c = std::cos(b.theta), s = std::sin(b.theta);
  const double hw = 0.5 * b.w, hh = 0.5 * b.h;
  const std::array<Vec2, 4> local{{{-hw, -hh}, {hw, -hh}, {hw, hh}, {-hw, hh}}};
  std::array<Vec2, 4> corner;
  for (int i = 0; i < 4; ++i) {
    corner[static_cast<std::size_t>(i)] = {b.cx + c * local[static_cast<std::size_t>(i)].x - s * local[static_cast<std::size_t>(i)].y,
                                           b.cy + s * local[static_cast<std::size_t>(i)].x + c * local[static_cast<std::size_t>(i)].y};
  }
  for (int i = 0; i < 4; ++i) {
    const Vec2 a = corner[static_cast<std::size_t>(i)];
    const Vec2 e = corner[static_cast<std::size_t>((i + 1) % 4)];
    if (cross(e - a, p - a) < 0.0) return false;
  }
  return true;
}

inline bool point_in_quad(Vec2 p, const Quad& q) {
  for (int i = 0; i < 4; ++i) {
    const Vec2 a = q.v[static_cast<std::size_t>(i)];
    const Vec2 b = q.v[static_cast<std::size_t>((i + 1) % 4)];
    if (cross(b - a, p - a) < 0.0) return false;
  }
  return true;
}

/// Monte Carlo SkewIoU estimate: uniform samples over the bounding box of
/// the union, counting membership with the cross-product test.
inline double mc_skew_iou(const RotatedBox& a, const RotatedBox& b, int samples, Rng& rng) {
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const RotatedBox* box : {&a, &b}) {
    const double c = std::cos(box->theta), s = std::sin(box->theta);
    const double hw = 0.5 * box->w, hh = 0.5 * box->h;
    const double rx = std::abs(c * hw) + std::abs(s * hh);
    const double ry = std::abs(s * hw) + std::abs(c * hh);
    xmin = std::min(xmin, box->cx - rx);
    xmax = std::max(xmax, box->cx + rx);
    ymin = std::min(ymin, box->cy - ry);
    ymax = std::max(ymax, box->cy + ry);
  }
  long in_union = 0, in_both = 0;
  for (int i = 0; i < samples; ++i) {
    const Vec2 p{rng.uniform(xmin, xmax), rng.uniform(ymin, ymax)};
    const bool ia = point_in_box_cross_test(p, a);
    const bool ib = point_in_box_cross_test(p, b);
    if (ia || ib) ++in_union;
    if (ia && ib) ++in_both;
  }
  return in_union > 0 ? static_cast<double>(in_both) / static_cast<double>(in_union) : 0.0;
}

/// Central finite differences of a scalar function of a rotated box over
/// its five parameters.
inline std::array<double, 5> central_difference(const std::function<double(const RotatedBox&)>& f,
                                                const RotatedBox& at, double h = 1e-5) {
  std::array<double, 5> g{};
  for (int i = 0; i < 5; ++i) {
    RotatedBox plus = at, minus = at;
    double* fields_p[5] = {&plus.cx, &plus.cy, &plus.w, &plus.h, &plus.theta};
    double* fields_m[5] = {&minus.cx, &minus.cy, &minus.w, &minus.h, &minus.theta};
    *fields_p[i] += h;
    *fields_m[i] -= h;
    g[static_cast<std::size_t>(i)] = (f(plus) - f(minus)) / (2.0 * h);
  }
  return g;
}

/// O(n^2) greedy NMS written with suppression flags; matches the keep-set
/// semantics of rotated_nms.
inline std::vector<Detection> brute_force_nms(const std::vector<Detection>& dets,
                                              double iou_threshold, bool class_aware) {
  std::vector<int> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int x, int y) {
    return dets[static_cast<std::size_t>(x)].score > dets[static_cast<std::size_t>(y)].score;
  });
  std::vector<bool> suppressed(dets.size(), false);
  std::vector<Detection> kept;
  for (std::size_t oi = 0; oi < order.size(); ++oi) {
    const int i = order[oi];
    if (suppressed[static_cast<std::size_t>(i)]) continue;
    kept.push_back(dets[static_cast<std::size_t>(i)]);
    for (std::size_t oj = oi + 1; oj < order.size(); ++oj) {
      const int j = order[oj];
      if (suppressed[static_cast<std::size_t>(j)]) continue;
      if (class_aware &&
          dets[static_cast<std::size_t>(i)].class_id != dets[static_cast<std::size_t>(j)].class_id) {
        continue;
      }
      if (skew_iou(dets[static_cast<std::size_t>(i)].box, dets[static_cast<std::size_t>(j)].box) >
          iou_threshold) {
        suppressed[static_cast<std::size_t>(j)] = true;
      }
    }
  }
  return kept;
}

/// Exhaustive task-aligned assignment for small fixtures: repeated max
/// scans instead of sorting, explicit conflict loops. Shares only the
/// geometric primitives with the production assigner.
inline AssignmentResult tal_assign_exhaustive(const AssignmentInput& in,
                                              const AnchorPointGrid& grid,
                                              const TalParams& params) {
  const int total = grid.total();
  const int num_gt = static_cast<int>(in.gt_boxes.size());
  AssignmentResult res;
  res.assigned_gt.assign(static_cast<std::size_t>(total), kUnassigned);
  res.alignment.assign(static_cast<std::size_t>(total), 0.0);
  res.soft_target.assign(static_cast<std::size_t>(total), 0.0);

  // t and mu for every (point, gt); -1 marks non-candidates.
  std::vector<std::vector<double>> t_of(static_cast<std::size_t>(num_gt)),
      mu_of(static_cast<std::size_t>(num_gt));
  for (int g = 0; g < num_gt; ++g) {
    t_of[static_cast<std::size_t>(g)].assign(static_cast<std::size_t>(total), -1.0);
    mu_of[static_cast<std::size_t>(g)].assign(static_cast<std::size_t>(total), -1.0);
    for (int i = 0; i < total; ++i) {
      if (!point_in_rbox(grid.point(i).pos, in.gt_boxes[static_cast<std::size_t>(g)])) continue;
      const double mu = skew_iou(in.pred_boxes[static_cast<std::size_t>(i)],
                                 in.gt_boxes[static_cast<std::size_t>(g)]);
      const double s = in.pred_scores[static_cast<std::size_t>(i) * in.num_classes +
                                      in.gt_labels[static_cast<std::size_t>(g)]];
      t_of[static_cast<std::size_t>(g)][static_cast<std::size_t>(i)] =
          std::pow(s, params.alpha) * std::pow(mu, params.beta);
      mu_of[static_cast<std::size_t>(g)][static_cast<std::size_t>(i)] = mu;
    }
  }

  // Top-k by repeated max scan (ties to the lower point index).
  std::vector<std::vector<int>> picked(static_cast<std::size_t>(num_gt));
  for (int g = 0; g < num_gt; ++g) {
    std::vector<bool> taken(static_cast<std::size_t>(total), false);
    for (int k = 0; k < params.topk; ++k) {
      int best = -1;
      for (int i = 0; i < total; ++i) {
        if (taken[static_cast<std::size_t>(i)]) continue;
        if (t_of[static_cast<std::size_t>(g)][static_cast<std::size_t>(i)] < 0.0) continue;
        if (best == -1 || t_of[static_cast<std::size_t>(g)][static_cast<std::size_t>(i)] >
                              t_of[static_cast<std::size_t>(g)][static_cast<std::size_t>(best)]) {
          best = i;
        }
      }
      if (best == -1) break;
      taken[static_cast<std::size_t>(best)] = true;
      picked[static_cast<std::size_t>(g)].push_back(best);
    }
  }

  // Conflicts: larger mu wins, smaller gt index on ties.
  for (int i = 0; i < total; ++i) {
    int winner = kUnassigned;
    for (int g = 0; g < num_gt; ++g) {
      bool claimed = false;
      for (int p : picked[static_cast<std::size_t>(g)]) claimed = claimed || p == i;
      if (!claimed) continue;
      if (winner == kUnassigned ||
          mu_of[static_cast<std::size_t>(g)][static_cast<std::size_t>(i)] >
              mu_of[static_cast<std::size_t>(winner)][static_cast<std::size_t>(i)]) {
        winner = g;
      }
    }
    if (winner != kUnassigned) {
      res.assigned_gt[static_cast<std::size_t>(i)] = winner;
      res.alignment[static_cast<std::size_t>(i)] =
          t_of[static_cast<std::size_t>(winner)][static_cast<std::size_t>(i)];
    }
  }

  for (int g = 0; g < num_gt; ++g) {
    double max_t = 0.0, max_mu = 0.0;
    for (int i = 0; i < total; ++i) {
      if (res.assigned_gt[static_cast<std::size_t>(i)] != g) continue;
      max_t = std::max(max_t, t_of[static_cast<std::size_t>(g)][static_cast<std::size_t>(i)]);
      max_mu = std::max(max_mu, mu_of[static_cast<std::size_t>(g)][static_cast<std::size_t>(i)]);
    }
    if (max_t <= 0.0) continue;
    for (int i = 0; i < total; ++i) {
      if (res.assigned_gt[static_cast<std::size_t>(i)] != g) continue;
      res.soft_target[static_cast<std::size_t>(i)] =
          res.alignment[static_cast<std::size_t>(i)] * max_mu / max_t;
    }
  }
  return res;
}

/// Scatter-order direct convolution: iterates input pixels and distributes
/// their contributions, the transpose of the gather loop in conv2d_direct.
inline Tensor4 conv2d_scatter(const Conv2d& conv, const Tensor4& x) {
  const int n = x.dim[0], ci = x.dim[1], h = x.dim[2], w = x.dim[3];
  const int co = conv.weight.dim[0], k = conv.weight.dim[2], pad = k / 2;
  Tensor4 out(n, co, h, w);
  for (int b = 0; b < n; ++b) {
    for (int oc = 0; oc < co; ++oc) {
      for (int oy = 0; oy < h; ++oy) {
        for (int ox = 0; ox < w; ++ox) out.at(b, oc, oy, ox) = conv.bias[static_cast<std::size_t>(oc)];
      }
    }
    for (int ic = 0; ic < ci; ++ic) {
      for (int iy = 0; iy < h; ++iy) {
        for (int ix = 0; ix < w; ++ix) {
          const double value = x.at(b, ic, iy, ix);
          for (int ky = 0; ky < k; ++ky) {
            const int oy = iy - ky + pad;
            if (oy < 0 || oy >= h) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int ox = ix - kx + pad;
              if (ox < 0 || ox >= w) continue;
              for (int oc = 0; oc < co; ++oc) {
                out.at(b, oc, oy, ox) += conv.weight.at(oc, ic, ky, kx) * value;
              }
            }
          }
        }
      }
    }
  }
  return out;
}

/// Brute-force minimum over an angle sweep of the enclosing-rectangle area.
inline double min_rect_area_sweep(std::span<const Vec2> pts, int steps = 180) {
  double best = std::numeric_limits<double>::infinity();
  for (int a = 0; a < steps; ++a) {
    const double theta = a * (kPi / steps);
    const double c = std::cos(theta), s = std::sin(theta);
    double umin = 1e300, umax = -1e300, vmin = 1e300, vmax = -1e300;
    for (const Vec2& p : pts) {
      const double u = c * p.x + s * p.y;
      const double v = -s * p.x + c * p.y;
      umin = std::min(umin, u);
      umax = std::max(umax, u);
      vmin = std::min(vmin, v);
      vmax = std::max(vmax, v);
    }
    best = std::min(best, (umax - umin) * (vmax - vmin));
  }
  return best;
}

/// Textbook axis-aligned IoU; only meaningful for theta = 0 boxes.
inline double aligned_iou(const RotatedBox& a, const RotatedBox& b) {
  const double ax0 = a.cx - 0.5 * a.w, ax1 = a.cx + 0.5 * a.w;
  const double ay0 = a.cy - 0.5 * a.h, ay1 = a.cy + 0.5 * a.h;
  const double bx0 = b.cx - 0.5 * b.w, bx1 = b.cx + 0.5 * b.w;
  const double by0 = b.cy - 0.5 * b.h, by1 = b.cy + 0.5 * b.h;
  const double iw = std::max(0.0, std::min(ax1, bx1) - std::max(ax0, bx0));
  const double ih = std::max(0.0, std::min(ay1, by1) - std::max(ay0, by0));
  const double inter = iw * ih;
  const double uni = a.w * a.h + b.w * b.h - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

/// Random box generator shared by the seeded checks and benchmarks.
struct BoxDomain {
  double center_min = -10.0, center_max = 10.0;
  double size_min = 4.0, size_max = 30.0;
  double theta_min = 0.0, theta_max = kPi;
};

inline RotatedBox random_box(Rng& rng, const BoxDomain& d = {}) {
  return {rng.uniform(d.center_min, d.center_max), rng.uniform(d.center_min, d.center_max),
          rng.uniform(d.size_min, d.size_max), rng.uniform(d.size_min, d.size_max),
          rng.uniform(d.theta_min, d.theta_max)};
}

}  // namespace rotdet::reference
