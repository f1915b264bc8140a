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
#include <array>
#include <cmath>
#include <numeric>
#include <vector>

#include "rotdet/angle_dfl.hpp"
#include "rotdet/assign.hpp"
#include "rotdet/errors.hpp"
#include "rotdet/geometry.hpp"

namespace rotdet {

/// Raw head outputs per anchor point.
struct RawPrediction {
  int num_classes = 1;
  std::vector<double> scores;                      // total x num_classes, in [0,1]
  std::vector<std::array<double, 4>> box_deltas;   // (dx, dy, dw, dh) in stride units
  std::vector<AngleDistribution> angle;            // normalized distributions
};

struct Detection {
  RotatedBox box;
  double score = 0.0;
  int class_id = 0;
};

struct DecodeOptions {
  double score_threshold = 0.1;
  /// true: w = exp(dw)*stride (guarantees positivity); false: w = dw*stride,
  /// points with non-positive extents are skipped.
  bool exp_wh = true;
};

/// Decodes head outputs into detections. Each anchor point whose best class
/// score reaches the threshold yields one detection:
/// cx = px + dx*stride, cy = py + dy*stride, w = exp(dw)*stride,
/// h = exp(dh)*stride, theta = decode_angle(dist). Boxes are canonicalized.
inline std::vector<Detection> decode(const RawPrediction& pred, const AnchorPointGrid& grid,
                                     const DecodeOptions& opts = {}) {
  const int total = grid.total();
  if (pred.num_classes < 1 ||
      pred.scores.size() != static_cast<std::size_t>(total) * pred.num_classes ||
      pred.box_deltas.size() != static_cast<std::size_t>(total) ||
      pred.angle.size() != static_cast<std::size_t>(total)) {
    throw validation_error("raw prediction arrays inconsistent with anchor grid");
  }
  std::vector<Detection> out;
  for (int i = 0; i < total; ++i) {
    int best_class = 0;
    double best_score = pred.scores[static_cast<std::size_t>(i) * pred.num_classes];
    for (int c = 1; c < pred.num_classes; ++c) {
      const double s = pred.scores[static_cast<std::size_t>(i) * pred.num_classes + c];
      if (s > best_score) {
        best_score = s;
        best_class = c;
      }
    }
    if (best_score < opts.score_threshold) continue;
    const AnchorPoint pt = grid.point(i);
    const auto& d = pred.box_deltas[static_cast<std::size_t>(i)];
    const double s = pt.stride;
    double w, h;
    if (opts.exp_wh) {
      w = std::exp(d[2]) * s;
      h = std::exp(d[3]) * s;
    } else {
      w = d[2] * s;
      h = d[3] * s;
      if (!(w > 0.0 && h > 0.0)) continue;
    }
    const RotatedBox box{pt.pos.x + d[0] * s, pt.pos.y + d[1] * s, w, h,
                         decode_angle(pred.angle[static_cast<std::size_t>(i)])};
    out.push_back({canonicalize(box), best_score, best_class});
  }
  return out;
}

/// Inverse of the exp-scale decode transform for a given anchor point.
inline std::array<double, 4> encode_box_deltas(const RotatedBox& box, Vec2 anchor, int stride) {
  validate(box);
  if (stride <= 0) throw validation_error("stride must be positive");
  const double s = stride;
  return {(box.cx - anchor.x) / s, (box.cy - anchor.y) / s, std::log(box.w / s),
          std::log(box.h / s)};
}

/// Greedy rotated NMS: sort by descending score (ties: input order), keep a
/// detection iff its SkewIoU with every kept detection (of the same class
/// when class_aware) is <= iou_threshold. Output keeps the sorted order.
inline std::vector<Detection> rotated_nms(const std::vector<Detection>& dets,
                                          double iou_threshold, bool class_aware = true) {
  if (!(iou_threshold > 0.0 && iou_threshold < 1.0)) {
    throw validation_error("iou_threshold must lie in (0, 1)");
  }
  std::vector<int> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return dets[static_cast<std::size_t>(a)].score > dets[static_cast<std::size_t>(b)].score;
  });
  std::vector<Detection> kept;
  for (int idx : order) {
    const Detection& d = dets[static_cast<std::size_t>(idx)];
    bool suppressed = false;
    for (const Detection& k : kept) {
      if (class_aware && k.class_id != d.class_id) continue;
      if (skew_iou(k.box, d.box) > iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(d);
  }
  return kept;
}

}  // namespace rotdet
