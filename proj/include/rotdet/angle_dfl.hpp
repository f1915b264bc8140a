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

#include <array>
#include <cmath>

#include "rotdet/errors.hpp"
#include "rotdet/geometry.hpp"

namespace rotdet {

// Bins i = 0..90 over [0, pi/2], one-degree intervals.
inline constexpr int kAngleBins = 91;
inline constexpr double kAngleBinWidth = kPi / 180.0;

/// Discrete probability distribution over the 91 angle bins.
struct AngleDistribution {
  std::array<double, kAngleBins> p{};
};

inline void validate(const AngleDistribution& dist) {
  double sum = 0.0;
  for (double v : dist.p) {
    if (!std::isfinite(v) || v < 0.0) {
      throw validation_error("angle distribution entries must be finite and >= 0");
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-6) {
    throw validation_error("angle distribution must sum to 1 within 1e-6");
  }
}

/// Expectation sum(p_i * i * omega) of the distribution; the predicted angle.
inline double decode_angle(const AngleDistribution& dist) {
  validate(dist);
  // Compensated sum of p_i * i, scaled by omega once at the end.
  double acc = 0.0;
  double comp = 0.0;
  for (int i = 0; i < kAngleBins; ++i) {
    const double term = dist.p[static_cast<std::size_t>(i)] * i - comp;
    const double next = acc + term;
    comp = (next - acc) - term;
    acc = next;
  }
  return acc * kAngleBinWidth;
}

/// Soft target: the angle distributed over the two bins bracketing it
/// (a single bin on exact hits), weighted by linear interpolation.
struct AngleTarget {
  int left_bin = 0;
  int right_bin = 0;
  double left_weight = 1.0;
  double right_weight = 0.0;
};

inline AngleTarget encode_angle(double theta) {
  if (!std::isfinite(theta) || theta < -1e-9 || theta > kHalfPi + 1e-9) {
    throw validation_error("encode_angle expects theta in [0, pi/2]; canonicalize first");
  }
  const double ratio = std::clamp(theta / kAngleBinWidth, 0.0, 90.0);
  // Snap to the bin when the division lands within 1e-12 of an integer, so
  // multiples of omega encode as exact hits.
  const double rounded = std::round(ratio);
  if (std::abs(ratio - rounded) <= 1e-12) {
    return {static_cast<int>(rounded), static_cast<int>(rounded), 1.0, 0.0};
  }
  const int left = static_cast<int>(ratio);
  const double frac = ratio - left;
  return {left, left + 1, 1.0 - frac, frac};
}

inline AngleDistribution to_distribution(const AngleTarget& t) {
  AngleDistribution d;
  d.p[static_cast<std::size_t>(t.left_bin)] += t.left_weight;
  d.p[static_cast<std::size_t>(t.right_bin)] += t.right_weight;
  return d;
}

/// DFL value and gradient with respect to the raw logits.
struct AngleLossGrad {
  double value = 0.0;
  std::array<double, kAngleBins> grad{};
};

/// Distribution focal loss over the angle bins: softmax the logits, then
/// -(lw*ln p[left] + rw*ln p[right]). The gradient is the usual softmax
/// cross-entropy form p - y with y the two-bin target.
inline AngleLossGrad dfl_loss(const std::array<double, kAngleBins>& logits,
                              const AngleTarget& target) {
  for (double v : logits) {
    if (!std::isfinite(v)) throw validation_error("dfl_loss logits must be finite");
  }
  if (target.left_bin < 0 || target.right_bin >= kAngleBins ||
      target.right_bin < target.left_bin || target.left_weight < 0.0 ||
      target.right_weight < 0.0 ||
      std::abs(target.left_weight + target.right_weight - 1.0) > 1e-9) {
    throw validation_error("invalid angle target");
  }
  double max_logit = logits[0];
  for (double v : logits) max_logit = std::max(max_logit, v);
  std::array<double, kAngleBins> prob{};
  double sum = 0.0;
  for (int i = 0; i < kAngleBins; ++i) {
    prob[static_cast<std::size_t>(i)] = std::exp(logits[static_cast<std::size_t>(i)] - max_logit);
    sum += prob[static_cast<std::size_t>(i)];
  }
  const double log_sum = std::log(sum);
  AngleLossGrad out;
  const auto log_p = [&](int i) {
    return logits[static_cast<std::size_t>(i)] - max_logit - log_sum;
  };
  out.value = -(target.left_weight * log_p(target.left_bin) +
                target.right_weight * log_p(target.right_bin));
  for (int i = 0; i < kAngleBins; ++i) {
    out.grad[static_cast<std::size_t>(i)] = prob[static_cast<std::size_t>(i)] / sum;
  }
  out.grad[static_cast<std::size_t>(target.left_bin)] -= target.left_weight;
  out.grad[static_cast<std::size_t>(target.right_bin)] -= target.right_weight;
  return out;
}

}  // namespace rotdet
