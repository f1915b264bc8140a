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

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "rotdet/errors.hpp"
#include "rotdet/geometry.hpp"

namespace rotdet {

struct AnchorLevel {
  int stride = 0;
  int nx = 0;
  int ny = 0;
};

struct AnchorPoint {
  Vec2 pos;
  int stride = 0;
  int level = 0;
};

/// Regular anchor-point grids for a feature pyramid: level l has spacing
/// stride(l) with offset stride/2. Flattened indexing is level-major and
/// row-major (y outer, x inner) within a level.
class AnchorPointGrid {
 public:
  AnchorPointGrid() = default;
  explicit AnchorPointGrid(std::vector<AnchorLevel> levels) : levels_(std::move(levels)) {
    int base = 0;
    for (const AnchorLevel& l : levels_) {
      offsets_.push_back(base);
      base += l.nx * l.ny;
    }
    total_ = base;
  }

  int total() const { return total_; }
  const std::vector<AnchorLevel>& levels() const { return levels_; }

  AnchorPoint point(int flat) const {
    for (std::size_t l = 0; l < levels_.size(); ++l) {
      const int rel = flat - offsets_[l];
      const AnchorLevel& lvl = levels_[l];
      if (rel < lvl.nx * lvl.ny) {
        const int iy = rel / lvl.nx;
        const int ix = rel % lvl.nx;
        const double s = lvl.stride;
        return {{(ix + 0.5) * s, (iy + 0.5) * s}, lvl.stride, static_cast<int>(l)};
      }
    }
    throw validation_error("anchor point index out of range");
  }

 private:
  std::vector<AnchorLevel> levels_;
  std::vector<int> offsets_;
  int total_ = 0;
};

/// Grid dims are ceil(size/stride) per axis.
inline AnchorPointGrid build_anchor_points(int image_w, int image_h,
                                           std::span<const int> strides) {
  if (image_w <= 0 || image_h <= 0 || strides.empty()) {
    throw validation_error("build_anchor_points: positive image size and at least one stride required");
  }
  std::vector<AnchorLevel> levels;
  for (int s : strides) {
    if (s <= 0) throw validation_error("stride must be positive");
    levels.push_back({s, (image_w + s - 1) / s, (image_h + s - 1) / s});
  }
  return AnchorPointGrid(std::move(levels));
}

inline constexpr int kUnassigned = -1;

struct AssignmentInput {
  std::vector<RotatedBox> gt_boxes;
  std::vector<int> gt_labels;
  int num_classes = 1;
  std::vector<double> pred_scores;     // total_points x num_classes, row-major, in [0,1]
  std::vector<RotatedBox> pred_boxes;  // total_points
};

struct AssignmentResult {
  std::vector<int> assigned_gt;      // kUnassigned for negatives
  std::vector<double> alignment;     // metric t (>= 0), 0 for negatives
  std::vector<double> soft_target;   // soft classification target in [0,1]
};

struct TalParams {
  double alpha = 1.0;
  double beta = 6.0;
  int topk = 13;
};

namespace detail {

inline void validate_assignment_input(const AssignmentInput& in, int total_points) {
  if (in.gt_boxes.size() != in.gt_labels.size()) {
    throw validation_error("gt_boxes and gt_labels size mismatch");
  }
  if (in.num_classes < 1) throw validation_error("num_classes must be >= 1");
  if (static_cast<int>(in.pred_boxes.size()) != total_points ||
      in.pred_scores.size() != static_cast<std::size_t>(total_points) * in.num_classes) {
    throw validation_error("prediction arrays inconsistent with anchor grid");
  }
  for (int label : in.gt_labels) {
    if (label < 0 || label >= in.num_classes) throw validation_error("gt label out of range");
  }
  for (double s : in.pred_scores) {
    if (!(s >= 0.0 && s <= 1.0)) throw validation_error("scores must lie in [0,1]");
  }
}

}  // namespace detail

/// Rotated task-aligned assignment. Candidates of a gt are the anchor points
/// inside its rotated box; each candidate is ranked by t = s^alpha * mu^beta
/// with s the predicted score of the gt's class and mu the SkewIoU of the
/// predicted box against the gt. Top-k candidates per gt become positives;
/// a point claimed by several gts goes to the one with larger mu (smaller
/// gt index on ties). Soft targets are t rescaled per gt so the maximum
/// equals the gt's maximum mu over its positives.
inline AssignmentResult rotated_tal_assign(const AssignmentInput& in,
                                           const AnchorPointGrid& grid,
                                           const TalParams& params = {}) {
  const int total = grid.total();
  if (total < 1) throw validation_error("anchor grid is empty");
  if (!(params.alpha > 0.0) || !(params.beta > 0.0) || params.topk < 1) {
    throw validation_error("tal parameters out of range");
  }
  detail::validate_assignment_input(in, total);

  AssignmentResult res;
  res.assigned_gt.assign(static_cast<std::size_t>(total), kUnassigned);
  res.alignment.assign(static_cast<std::size_t>(total), 0.0);
  res.soft_target.assign(static_cast<std::size_t>(total), 0.0);
  const int num_gt = static_cast<int>(in.gt_boxes.size());
  if (num_gt == 0) return res;

  struct Candidate {
    double t;
    double mu;
    int point;
  };
  std::vector<std::vector<Candidate>> selected(static_cast<std::size_t>(num_gt));
  for (int g = 0; g < num_gt; ++g) {
    const RotatedBox& gt = in.gt_boxes[static_cast<std::size_t>(g)];
    validate(gt);
    const int label = in.gt_labels[static_cast<std::size_t>(g)];
    std::vector<Candidate> cands;
    for (int i = 0; i < total; ++i) {
      if (!point_in_rbox(grid.point(i).pos, gt)) continue;
      const double mu = skew_iou(in.pred_boxes[static_cast<std::size_t>(i)], gt);
      const double s =
          in.pred_scores[static_cast<std::size_t>(i) * in.num_classes + label];
      const double t = std::pow(s, params.alpha) * std::pow(mu, params.beta);
      cands.push_back({t, mu, i});
    }
    std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
      return a.t > b.t || (a.t == b.t && a.point < b.point);
    });
    if (static_cast<int>(cands.size()) > params.topk) cands.resize(static_cast<std::size_t>(params.topk));
    selected[static_cast<std::size_t>(g)] = std::move(cands);
  }

  // Conflict resolution: larger mu wins; ties go to the smaller gt index.
  std::vector<double> best_mu(static_cast<std::size_t>(total), -1.0);
  std::vector<double> best_t(static_cast<std::size_t>(total), 0.0);
  for (int g = 0; g < num_gt; ++g) {
    for (const Candidate& c : selected[static_cast<std::size_t>(g)]) {
      const auto i = static_cast<std::size_t>(c.point);
      if (c.mu > best_mu[i]) {
        best_mu[i] = c.mu;
        best_t[i] = c.t;
        res.assigned_gt[i] = g;
      }
    }
  }

  // Per-gt normalization of the soft targets over the surviving positives.
  std::vector<double> max_t(static_cast<std::size_t>(num_gt), 0.0);
  std::vector<double> max_mu(static_cast<std::size_t>(num_gt), 0.0);
  for (int i = 0; i < total; ++i) {
    const int g = res.assigned_gt[static_cast<std::size_t>(i)];
    if (g == kUnassigned) continue;
    res.alignment[static_cast<std::size_t>(i)] = best_t[static_cast<std::size_t>(i)];
    max_t[static_cast<std::size_t>(g)] = std::max(max_t[static_cast<std::size_t>(g)], best_t[static_cast<std::size_t>(i)]);
    max_mu[static_cast<std::size_t>(g)] = std::max(max_mu[static_cast<std::size_t>(g)], best_mu[static_cast<std::size_t>(i)]);
  }
  for (int i = 0; i < total; ++i) {
    const int g = res.assigned_gt[static_cast<std::size_t>(i)];
    if (g == kUnassigned) continue;
    const double mt = max_t[static_cast<std::size_t>(g)];
    res.soft_target[static_cast<std::size_t>(i)] =
        mt > 0.0 ? res.alignment[static_cast<std::size_t>(i)] * max_mu[static_cast<std::size_t>(g)] / mt : 0.0;
  }
  return res;
}

struct FcosrParams {
  /// Per-level [lo, hi) ranges over gt scale sqrt(w*h); must partition
  /// (0, inf) in level order.
  std::vector<std::pair<double, double>> scale_ranges;
  /// The sampling region is the inscribed ellipse scaled by this factor.
  double ellipse_shrink = 0.5;
};

inline FcosrParams default_fcosr_params(std::size_t num_levels) {
  FcosrParams p;
  const double inf = std::numeric_limits<double>::infinity();
  double lo = 0.0;
  double hi = 64.0;  // doubling per level, FCOS convention for strides 8/16/32
  for (std::size_t l = 0; l < num_levels; ++l) {
    if (l + 1 == num_levels) {
      p.scale_ranges.emplace_back(lo, inf);
    } else {
      p.scale_ranges.emplace_back(lo, hi);
      lo = hi;
      hi *= 2.0;
    }
  }
  return p;
}

/// Static FCOSR-style assigner. A point is positive for a gt when it lies
/// in the gt's shrunk inscribed ellipse and the gt scale falls in the
/// point's level range; overlaps go to the smaller-area gt. A gt left
/// without positives falls back to its nearest anchor point among the
/// points inside its box (no positives when no grid point is inside).
inline AssignmentResult fcosr_assign(const std::vector<RotatedBox>& gt_boxes,
                                     const AnchorPointGrid& grid,
                                     const FcosrParams& params) {
  const int total = grid.total();
  if (total < 1) throw validation_error("anchor grid is empty");
  if (params.scale_ranges.size() != grid.levels().size()) {
    throw validation_error("scale_ranges must have one entry per level");
  }
  if (!(params.ellipse_shrink > 0.0 && params.ellipse_shrink <= 1.0)) {
    throw validation_error("ellipse_shrink must lie in (0, 1]");
  }
  double expect_lo = 0.0;
  for (std::size_t l = 0; l < params.scale_ranges.size(); ++l) {
    const auto [lo, hi] = params.scale_ranges[l];
    if (lo != expect_lo || !(hi > lo)) {
      throw validation_error("scale_ranges must partition (0, inf) in level order");
    }
    expect_lo = hi;
  }
  if (!std::isinf(expect_lo)) {
    throw validation_error("last scale range must extend to infinity");
  }

  AssignmentResult res;
  res.assigned_gt.assign(static_cast<std::size_t>(total), kUnassigned);
  res.alignment.assign(static_cast<std::size_t>(total), 0.0);
  res.soft_target.assign(static_cast<std::size_t>(total), 0.0);
  const int num_gt = static_cast<int>(gt_boxes.size());
  if (num_gt == 0) return res;
  for (const RotatedBox& b : gt_boxes) validate(b);

  const auto in_sampling_region = [&](Vec2 p, const RotatedBox& b) {
    const double c = std::cos(b.theta), s = std::sin(b.theta);
    const double dx = p.x - b.cx, dy = p.y - b.cy;
    const double lx = c * dx + s * dy;
    const double ly = -s * dx + c * dy;
    const double rx = params.ellipse_shrink * 0.5 * b.w;
    const double ry = params.ellipse_shrink * 0.5 * b.h;
    const double ex = lx / rx, ey = ly / ry;
    return ex * ex + ey * ey <= 1.0;
  };

  std::vector<int> positive_count(static_cast<std::size_t>(num_gt), 0);
  for (int i = 0; i < total; ++i) {
    const AnchorPoint pt = grid.point(i);
    const auto [lo, hi] = params.scale_ranges[static_cast<std::size_t>(pt.level)];
    int winner = kUnassigned;
    for (int g = 0; g < num_gt; ++g) {
      const RotatedBox& b = gt_boxes[static_cast<std::size_t>(g)];
      const double scale = std::sqrt(b.area());
      if (scale < lo || scale >= hi) continue;
      if (!in_sampling_region(pt.pos, b)) continue;
      if (winner == kUnassigned || b.area() < gt_boxes[static_cast<std::size_t>(winner)].area()) {
        winner = g;
      }
    }
    if (winner != kUnassigned) {
      res.assigned_gt[static_cast<std::size_t>(i)] = winner;
      ++positive_count[static_cast<std::size_t>(winner)];
    }
  }

  // Fallback pass, smaller-area gts first.
  std::vector<int> order(static_cast<std::size_t>(num_gt));
  for (int g = 0; g < num_gt; ++g) order[static_cast<std::size_t>(g)] = g;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const double aa = gt_boxes[static_cast<std::size_t>(a)].area();
    const double ab = gt_boxes[static_cast<std::size_t>(b)].area();
    return aa < ab || (aa == ab && a < b);
  });
  std::vector<bool> is_fallback(static_cast<std::size_t>(total), false);
  for (int g : order) {
    if (positive_count[static_cast<std::size_t>(g)] > 0) continue;
    const RotatedBox& b = gt_boxes[static_cast<std::size_t>(g)];
    std::vector<std::pair<double, int>> inside;  // (squared distance, point)
    for (int i = 0; i < total; ++i) {
      const Vec2 p = grid.point(i).pos;
      if (!point_in_rbox(p, b)) continue;
      const double dx = p.x - b.cx, dy = p.y - b.cy;
      inside.emplace_back(dx * dx + dy * dy, i);
    }
    std::sort(inside.begin(), inside.end());
    int chosen = kUnassigned;
    for (const auto& [d2, i] : inside) {
      if (is_fallback[static_cast<std::size_t>(i)]) continue;
      const int owner = res.assigned_gt[static_cast<std::size_t>(i)];
      if (owner != kUnassigned && positive_count[static_cast<std::size_t>(owner)] <= 1) continue;
      chosen = i;
      break;
    }
    if (chosen == kUnassigned && !inside.empty()) chosen = inside.front().second;
    if (chosen == kUnassigned) continue;  // gt contains no grid point
    const int prev = res.assigned_gt[static_cast<std::size_t>(chosen)];
    if (prev != kUnassigned) --positive_count[static_cast<std::size_t>(prev)];
    res.assigned_gt[static_cast<std::size_t>(chosen)] = g;
    is_fallback[static_cast<std::size_t>(chosen)] = true;
    ++positive_count[static_cast<std::size_t>(g)];
  }

  for (int i = 0; i < total; ++i) {
    if (res.assigned_gt[static_cast<std::size_t>(i)] != kUnassigned) {
      res.alignment[static_cast<std::size_t>(i)] = 1.0;
      res.soft_target[static_cast<std::size_t>(i)] = 1.0;
    }
  }
  return res;
}

}  // namespace rotdet
