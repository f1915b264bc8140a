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

// Variance of a uniform distribution over an edge of length w is w^2/12;
// this is the divisor the Gaussian-box construction uses. Some detectors
// use 4 instead (Gaussian matched to the half extents).
inline constexpr double kDefaultVarianceDivisor = 12.0;

/// Symmetric 2x2 matrix.
struct Mat2 {
  double xx = 0.0;
  double xy = 0.0;
  double yy = 0.0;

  friend Mat2 operator+(const Mat2& a, const Mat2& b) {
    return {a.xx + b.xx, a.xy + b.xy, a.yy + b.yy};
  }
  friend Mat2 operator*(double s, const Mat2& a) { return {s * a.xx, s * a.xy, s * a.yy}; }
};

inline double det(const Mat2& m) { return m.xx * m.yy - m.xy * m.xy; }

inline Mat2 inverse(const Mat2& m) {
  const double d = det(m);
  return {m.yy / d, -m.xy / d, m.xx / d};
}

inline Vec2 mul(const Mat2& m, Vec2 v) {
  return {m.xx * v.x + m.xy * v.y, m.xy * v.x + m.yy * v.y};
}

/// Frobenius inner product of two symmetric 2x2 matrices.
inline double frob(const Mat2& a, const Mat2& b) {
  return a.xx * b.xx + 2.0 * a.xy * b.xy + a.yy * b.yy;
}

/// 2-D Gaussian representation of a rotated box: mean at the center,
/// covariance R(theta) diag(w^2/12, h^2/12) R(theta)^T.
struct GaussianBox {
  Vec2 mean;
  Mat2 cov;
};

namespace detail {

inline Mat2 cov_from_trig(double a, double d, double c, double s) {
  const double cc = c * c, ss = s * s, cs = c * s;
  return {a * cc + d * ss, (a - d) * cs, a * ss + d * cc};
}

}  // namespace detail

inline GaussianBox rbox_to_gaussian(const RotatedBox& b,
                                    double variance_divisor = kDefaultVarianceDivisor) {
  validate(b);
  const double c = std::cos(b.theta);
  const double s = std::sin(b.theta);
  const double a = b.w * b.w / variance_divisor;
  const double d = b.h * b.h / variance_divisor;
  return {{b.cx, b.cy}, detail::cov_from_trig(a, d, c, s)};
}

/// Loss value with its gradient with respect to the predicted box
/// parameters (d/dcx, d/dcy, d/dw, d/dh, d/dtheta).
struct LossGrad {
  double value = 0.0;
  std::array<double, 5> grad{};
};

namespace detail {

struct CovParts {
  Mat2 cov;
  Mat2 d_w;      // dSigma/dw
  Mat2 d_h;      // dSigma/dh
  Mat2 d_theta;  // dSigma/dtheta
};

inline CovParts cov_with_partials(const RotatedBox& b, double divisor) {
  const double c = std::cos(b.theta);
  const double s = std::sin(b.theta);
  const double a = b.w * b.w / divisor;
  const double d = b.h * b.h / divisor;
  const double cc = c * c, ss = s * s, cs = c * s;
  CovParts out;
  out.cov = cov_from_trig(a, d, c, s);
  out.d_w = (2.0 * b.w / divisor) * Mat2{cc, cs, ss};
  out.d_h = (2.0 * b.h / divisor) * Mat2{ss, -cs, cc};
  const double sin2t = 2.0 * cs;
  const double cos2t = cc - ss;
  out.d_theta = (a - d) * Mat2{-sin2t, cos2t, sin2t};
  return out;
}

// Contracts dB/dSigma and dB/dmu with the covariance partials into the
// five-parameter gradient, scaled by the outer-loss derivative.
inline std::array<double, 5> chain_to_box(const Mat2& d_sigma, Vec2 d_mu,
                                          const CovParts& parts, double outer) {
  return {outer * d_mu.x, outer * d_mu.y, outer * frob(d_sigma, parts.d_w),
          outer * frob(d_sigma, parts.d_h), outer * frob(d_sigma, parts.d_theta)};
}

}  // namespace detail

/// Hellinger-distance loss from the Bhattacharyya coefficient of the two
/// Gaussian boxes: loss = sqrt(1 - exp(-B_D)), with
/// B_D = 1/8 d^T S^-1 d + 1/2 ln(det S / sqrt(det S1 det S2)), S = (S1+S2)/2.
/// Symmetric in its arguments; zero with zero gradient at pred == gt.
inline LossGrad probiou_loss(const RotatedBox& pred, const RotatedBox& gt,
                             double variance_divisor = kDefaultVarianceDivisor) {
  validate(pred);
  validate(gt);
  const detail::CovParts p = detail::cov_with_partials(pred, variance_divisor);
  const Mat2 s1 = p.cov;
  const Mat2 s2 = rbox_to_gaussian(gt, variance_divisor).cov;
  const Mat2 sm = 0.5 * (s1 + s2);
  const double det1 = det(s1);
  const double det2 = det(s2);
  const double detm = det(sm);
  if (!(det1 > 0.0) || !(det2 > 0.0) || !(detm > 0.0)) {
    throw std::logic_error("gaussian box covariance is not positive definite");
  }
  const Mat2 smi = inverse(sm);
  const Vec2 d{pred.cx - gt.cx, pred.cy - gt.cy};
  const Vec2 v = mul(smi, d);
  const double quad = d.x * v.x + d.y * v.y;
  double bd = 0.125 * quad + 0.5 * std::log(detm / std::sqrt(det1 * det2));
  bd = std::max(bd, 0.0);
  const double bc = std::exp(-bd);
  const double hell_sq = std::max(1.0 - bc, 0.0);
  const double loss = std::sqrt(hell_sq);

  // dB_D/dmu and dB_D/dSigma1 (entries treated as independent; the chain
  // rule through Sigma(w,h,theta) supplies all four entries).
  const Vec2 d_mu = 0.25 * v;
  const Mat2 s1i = inverse(s1);
  const Mat2 d_sigma{-0.0625 * v.x * v.x + 0.25 * (smi.xx - s1i.xx),
                     -0.0625 * v.x * v.y + 0.25 * (smi.xy - s1i.xy),
                     -0.0625 * v.y * v.y + 0.25 * (smi.yy - s1i.yy)};
  // d loss / d B_D; at the minimum the inner gradient vanishes, so the
  // guarded denominator leaves an exact zero gradient there.
  const double d_loss = loss > 1e-12 ? bc / (2.0 * loss) : 0.0;
  return {loss, detail::chain_to_box(d_sigma, d_mu, p, d_loss)};
}

struct KldOptions {
  double tau = 1.0;
  /// false: KL(pred || gt) (default); true: KL(gt || pred).
  bool reverse = false;
  double variance_divisor = kDefaultVarianceDivisor;
};

/// Kullback-Leibler divergence between the two Gaussian boxes, mapped to
/// loss = 1 - 1/(tau + ln(D + 1)). Zero with zero gradient at pred == gt;
/// asymmetric in general.
inline LossGrad kld_loss(const RotatedBox& pred, const RotatedBox& gt,
                         const KldOptions& opts = {}) {
  validate(pred);
  validate(gt);
  const detail::CovParts p = detail::cov_with_partials(pred, opts.variance_divisor);
  const Mat2 s1 = p.cov;
  const Mat2 s2 = rbox_to_gaussian(gt, opts.variance_divisor).cov;
  const double det1 = det(s1);
  const double det2 = det(s2);
  if (!(det1 > 0.0) || !(det2 > 0.0)) {
    throw std::logic_error("gaussian box covariance is not positive definite");
  }

  double div = 0.0;
  Vec2 d_mu;      // dD/dmu_pred
  Mat2 d_sigma;   // dD/dSigma_pred
  if (!opts.reverse) {
    // KL(N1 || N2) = 1/2 [tr(S2^-1 S1) + d^T S2^-1 d - 2 + ln(det2/det1)]
    const Mat2 s2i = inverse(s2);
    const Vec2 d{pred.cx - gt.cx, pred.cy - gt.cy};
    const Vec2 u = mul(s2i, d);
    const double quad = d.x * u.x + d.y * u.y;
    div = 0.5 * (frob(s2i, s1) + quad - 2.0 + std::log(det2 / det1));
    const Mat2 s1i = inverse(s1);
    d_mu = u;
    d_sigma = 0.5 * (s2i + (-1.0 * s1i));
  } else {
    // KL(N2 || N1) = 1/2 [tr(S1^-1 S2) + e^T S1^-1 e - 2 + ln(det1/det2)]
    const Mat2 s1i = inverse(s1);
    const Vec2 e{gt.cx - pred.cx, gt.cy - pred.cy};
    const Vec2 z = mul(s1i, e);
    const double quad = e.x * z.x + e.y * z.y;
    div = 0.5 * (frob(s1i, s2) + quad - 2.0 + std::log(det1 / det2));
    d_mu = {-z.x, -z.y};
    // d/dS1 of tr(S1^-1 S2) = -S1^-1 S2 S1^-1; of e^T S1^-1 e = -z z^T;
    // of ln det S1 = S1^-1.
    const Mat2 zs{z.x * z.x, z.x * z.y, z.y * z.y};
    // S1^-1 S2 S1^-1; the intermediate product is a general 2x2, the
    // sandwich is symmetric again.
    const Mat2 a = s1i;
    const Mat2 b = s2;
    const double m00 = a.xx * b.xx + a.xy * b.xy;
    const double m01 = a.xx * b.xy + a.xy * b.yy;
    const double m10 = a.xy * b.xx + a.yy * b.xy;
    const double m11 = a.xy * b.xy + a.yy * b.yy;
    const Mat2 aba{m00 * a.xx + m01 * a.xy, m00 * a.xy + m01 * a.yy,
                   m10 * a.xy + m11 * a.yy};
    d_sigma = 0.5 * (Mat2{-aba.xx, -aba.xy, -aba.yy} + (-1.0 * zs) + a);
  }
  div = std::max(div, 0.0);
  const double denom = opts.tau + std::log1p(div);
  const double loss = 1.0 - 1.0 / denom;
  const double d_loss = 1.0 / (denom * denom * (1.0 + div));
  return {loss, detail::chain_to_box(d_sigma, d_mu, p, d_loss)};
}

}  // namespace rotdet
