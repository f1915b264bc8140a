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
#include <optional>
#include <vector>

#include "rotdet/errors.hpp"

namespace rotdet {

/// Dense row-major 4-D tensor. Feature maps are (batch, channel, height,
/// width); convolution weights are (c_out, c_in, kh, kw).
struct Tensor4 {
  std::array<int, 4> dim{};
  std::vector<double> v;

  Tensor4() = default;
  Tensor4(int d0, int d1, int d2, int d3)
      : dim{d0, d1, d2, d3},
        v(static_cast<std::size_t>(d0) * d1 * d2 * d3, 0.0) {}

  double& at(int a, int b, int c, int d) {
    return v[((static_cast<std::size_t>(a) * dim[1] + b) * dim[2] + c) * dim[3] + d];
  }
  double at(int a, int b, int c, int d) const {
    return v[((static_cast<std::size_t>(a) * dim[1] + b) * dim[2] + c) * dim[3] + d];
  }
  std::size_t size() const { return v.size(); }
};

struct Conv2d {
  Tensor4 weight;             // (c_out, c_in, k, k)
  std::vector<double> bias;   // c_out
};

/// Per-channel normalization statistics: y = gamma*(x - mean)/sqrt(var+eps) + shift.
/// Default-constructed stats with eps = 0 are an exact pass-through.
struct BranchNorm {
  std::vector<double> mean, var, gamma, shift;
  double eps = 1e-5;

  static BranchNorm identity(int channels) {
    BranchNorm n;
    n.mean.assign(static_cast<std::size_t>(channels), 0.0);
    n.var.assign(static_cast<std::size_t>(channels), 1.0);
    n.gamma.assign(static_cast<std::size_t>(channels), 1.0);
    n.shift.assign(static_cast<std::size_t>(channels), 0.0);
    n.eps = 0.0;
    return n;
  }
};

/// Training-time weights of one gated RepVGG block: a 3x3 conv, a gated 1x1
/// conv, and (when channel counts allow) a gated identity path, each with
/// optional per-branch normalization.
struct RepBranchWeights {
  Conv2d conv3;
  Conv2d conv1;
  double alpha1 = 1.0;
  std::optional<double> alpha2;  // identity gate; requires c_in == c_out
  std::optional<BranchNorm> norm3, norm1, norm_id;
};

struct FusedConv {
  Tensor4 kernel;             // (c_out, c_in, 3, 3)
  std::vector<double> bias;   // c_out
};

namespace detail {

inline void validate_conv(const Conv2d& conv, const char* what) {
  const int k = conv.weight.dim[2];
  if (k != conv.weight.dim[3] || (k != 1 && k != 3)) {
    throw validation_error(std::string(what) + ": kernel must be 1x1 or 3x3");
  }
  if (conv.bias.size() != static_cast<std::size_t>(conv.weight.dim[0])) {
    throw validation_error(std::string(what) + ": bias size must equal c_out");
  }
}

inline void validate_norm(const BranchNorm& n, int channels, const char* what) {
  const auto c = static_cast<std::size_t>(channels);
  if (n.mean.size() != c || n.var.size() != c || n.gamma.size() != c || n.shift.size() != c) {
    throw validation_error(std::string(what) + ": norm stats size must equal channel count");
  }
  for (double v : n.var) {
    if (!(v + n.eps > 0.0)) throw validation_error(std::string(what) + ": var + eps must be positive");
  }
}

inline void apply_norm(Tensor4& y, const BranchNorm& n) {
  for (int b = 0; b < y.dim[0]; ++b) {
    for (int c = 0; c < y.dim[1]; ++c) {
      const auto ci = static_cast<std::size_t>(c);
      const double scale = n.gamma[ci] / std::sqrt(n.var[ci] + n.eps);
      for (int i = 0; i < y.dim[2]; ++i) {
        for (int j = 0; j < y.dim[3]; ++j) {
          y.at(b, c, i, j) = scale * (y.at(b, c, i, j) - n.mean[ci]) + n.shift[ci];
        }
      }
    }
  }
}

}  // namespace detail

/// Direct cross-correlation, stride 1, same padding (k/2) for odd kernels.
inline Tensor4 conv2d_direct(const Conv2d& conv, const Tensor4& x) {
  detail::validate_conv(conv, "conv2d_direct");
  if (x.dim[1] != conv.weight.dim[1]) {
    throw validation_error("conv2d_direct: input channels do not match kernel");
  }
  const int n = x.dim[0], ci = x.dim[1], h = x.dim[2], w = x.dim[3];
  const int co = conv.weight.dim[0], k = conv.weight.dim[2], pad = k / 2;
  Tensor4 out(n, co, h, w);
  for (int b = 0; b < n; ++b) {
    for (int oc = 0; oc < co; ++oc) {
      for (int oy = 0; oy < h; ++oy) {
        for (int ox = 0; ox < w; ++ox) {
          double acc = conv.bias[static_cast<std::size_t>(oc)];
          for (int ic = 0; ic < ci; ++ic) {
            for (int ky = 0; ky < k; ++ky) {
              const int iy = oy + ky - pad;
              if (iy < 0 || iy >= h) continue;
              for (int kx = 0; kx < k; ++kx) {
                const int ix = ox + kx - pad;
                if (ix < 0 || ix >= w) continue;
                acc += conv.weight.at(oc, ic, ky, kx) * x.at(b, ic, iy, ix);
              }
            }
          }
          out.at(b, oc, oy, ox) = acc;
        }
      }
    }
  }
  return out;
}

namespace detail {

inline void validate_branch(const RepBranchWeights& w) {
  validate_conv(w.conv3, "conv3");
  validate_conv(w.conv1, "conv1");
  if (w.conv3.weight.dim[2] != 3) throw validation_error("conv3 must be 3x3");
  if (w.conv1.weight.dim[2] != 1) throw validation_error("conv1 must be 1x1");
  if (w.conv3.weight.dim[0] != w.conv1.weight.dim[0] ||
      w.conv3.weight.dim[1] != w.conv1.weight.dim[1]) {
    throw validation_error("branch convolutions must share channel dimensions");
  }
  const int co = w.conv3.weight.dim[0], ci = w.conv3.weight.dim[1];
  if (w.alpha2 && ci != co) {
    throw validation_error("identity branch requires c_in == c_out");
  }
  if (!std::isfinite(w.alpha1) || (w.alpha2 && !std::isfinite(*w.alpha2))) {
    throw validation_error("gates must be finite");
  }
  if (w.norm3) validate_norm(*w.norm3, co, "norm3");
  if (w.norm1) validate_norm(*w.norm1, co, "norm1");
  if (w.norm_id) validate_norm(*w.norm_id, ci, "norm_id");
}

}  // namespace detail

/// Training-time forward pass of the gated block:
/// y = n3(conv3(x)) + alpha1 * n1(conv1(x)) + alpha2 * nid(x).
inline Tensor4 branch_forward(const RepBranchWeights& w, const Tensor4& x) {
  detail::validate_branch(w);
  if (x.dim[1] != w.conv3.weight.dim[1]) {
    throw validation_error("branch_forward: input channels mismatch");
  }
  Tensor4 y3 = conv2d_direct(w.conv3, x);
  if (w.norm3) detail::apply_norm(y3, *w.norm3);
  Tensor4 y1 = conv2d_direct(w.conv1, x);
  if (w.norm1) detail::apply_norm(y1, *w.norm1);
  Tensor4 id;
  if (w.alpha2) {
    id = x;
    if (w.norm_id) detail::apply_norm(id, *w.norm_id);
  }
  Tensor4 out = y3;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.v[i] += w.alpha1 * y1.v[i];
    if (w.alpha2) out.v[i] += *w.alpha2 * id.v[i];
  }
  return out;
}

/// Exact re-parameterization of the gated block into a single 3x3 conv:
/// fold each branch's normalization into its kernel/bias, embed the gated
/// 1x1 kernel at the 3x3 center, add the gated identity as a center tap,
/// and sum. The fused forward equals branch_forward up to rounding.
inline FusedConv fuse(const RepBranchWeights& w) {
  detail::validate_branch(w);
  const int co = w.conv3.weight.dim[0], ci = w.conv3.weight.dim[1];
  FusedConv fused;
  fused.kernel = Tensor4(co, ci, 3, 3);
  fused.bias.assign(static_cast<std::size_t>(co), 0.0);

  const auto fold_scale = [](const std::optional<BranchNorm>& n, int c) {
    return n ? n->gamma[static_cast<std::size_t>(c)] /
                   std::sqrt(n->var[static_cast<std::size_t>(c)] + n->eps)
             : 1.0;
  };
  const auto fold_bias = [&](const std::optional<BranchNorm>& n, int c, double raw_bias) {
    if (!n) return raw_bias;
    const auto ci_ = static_cast<std::size_t>(c);
    return (raw_bias - n->mean[ci_]) * fold_scale(n, c) + n->shift[ci_];
  };

  for (int oc = 0; oc < co; ++oc) {
    const double s3 = fold_scale(w.norm3, oc);
    const double s1 = fold_scale(w.norm1, oc);
    for (int ic = 0; ic < ci; ++ic) {
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          fused.kernel.at(oc, ic, ky, kx) = s3 * w.conv3.weight.at(oc, ic, ky, kx);
        }
      }
      fused.kernel.at(oc, ic, 1, 1) += w.alpha1 * s1 * w.conv1.weight.at(oc, ic, 0, 0);
    }
    fused.bias[static_cast<std::size_t>(oc)] =
        fold_bias(w.norm3, oc, w.conv3.bias[static_cast<std::size_t>(oc)]) +
        w.alpha1 * fold_bias(w.norm1, oc, w.conv1.bias[static_cast<std::size_t>(oc)]);
    if (w.alpha2) {
      const double sid = fold_scale(w.norm_id, oc);
      fused.kernel.at(oc, oc, 1, 1) += *w.alpha2 * sid;
      fused.bias[static_cast<std::size_t>(oc)] += *w.alpha2 * fold_bias(w.norm_id, oc, 0.0);
    }
  }
  return fused;
}

inline Tensor4 run_fused(const FusedConv& f, const Tensor4& x) {
  return conv2d_direct(Conv2d{f.kernel, f.bias}, x);
}

}  // namespace rotdet
