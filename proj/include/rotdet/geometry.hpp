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
#include <span>
#include <vector>

#include "rotdet/errors.hpp"

namespace rotdet {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kHalfPi = kPi / 2.0;

// Vertex dedup tolerance (px) and empty-intersection area cutoff (px^2);
// sized to keep double-precision clipping stable at DOTA pixel scales
// (coordinates up to ~4096 px).
inline constexpr double kGeomEps = 1e-9;
inline constexpr double kAreaEps = 1e-12;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }

/// Five-parameter oriented box. `theta` is the counter-clockwise angle
/// (radians, math coordinates: x right, y up) between the +x axis and the
/// edge of length `w`. Any finite theta is accepted by the geometric
/// operations; canonicalize() folds it into [0, pi/2).
struct RotatedBox {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;
  double theta = 0.0;

  double area() const { return w * h; }
};

inline bool is_valid(const RotatedBox& b) {
  return std::isfinite(b.cx) && std::isfinite(b.cy) && std::isfinite(b.w) &&
         std::isfinite(b.h) && std::isfinite(b.theta) && b.w > 0.0 && b.h > 0.0;
}

inline void validate(const RotatedBox& b) {
  if (!is_valid(b)) {
    throw validation_error("invalid rotated box: extents must be positive and all fields finite");
  }
}

/// Folds theta into [0, pi/2), exchanging w/h when a quarter turn is
/// absorbed. The returned box covers the identical point set. Idempotent.
inline RotatedBox canonicalize(const RotatedBox& b) {
  validate(b);
  // A rectangle is invariant under rotation by pi, and a quarter turn
  // exchanges its edges.
  double t = std::fmod(b.theta, kPi);
  if (t < 0.0) t += kPi;
  double w = b.w, h = b.h;
  while (t >= kHalfPi) {
    t -= kHalfPi;
    std::swap(w, h);
  }
  if (t < 0.0) t = 0.0;
  return {b.cx, b.cy, w, h, t};
}

/// Convex quadrilateral, counter-clockwise winding.
struct Quad {
  std::array<Vec2, 4> v{};
};

/// Corners of the rotated rectangle, counter-clockwise, starting from the
/// corner at local (-w/2, -h/2).
inline Quad rbox_to_quad(const RotatedBox& b) {
  validate(b);
  const double c = std::cos(b.theta);
  const double s = std::sin(b.theta);
  const double hw = 0.5 * b.w;
  const double hh = 0.5 * b.h;
  const std::array<Vec2, 4> local{{{-hw, -hh}, {hw, -hh}, {hw, hh}, {-hw, hh}}};
  Quad q;
  for (int i = 0; i < 4; ++i) {
    q.v[i] = {b.cx + c * local[i].x - s * local[i].y,
              b.cy + s * local[i].x + c * local[i].y};
  }
  return q;
}

/// True iff p lies inside or on the boundary of the box. Implemented by
/// rotating p into the box frame and comparing against the half extents.
inline bool point_in_rbox(Vec2 p, const RotatedBox& b) {
  const double c = std::cos(b.theta);
  const double s = std::sin(b.theta);
  const double dx = p.x - b.cx;
  const double dy = p.y - b.cy;
  const double lx = c * dx + s * dy;
  const double ly = -s * dx + c * dy;
  return std::abs(lx) <= 0.5 * b.w && std::abs(ly) <= 0.5 * b.h;
}

/// Convex polygon with inline storage. Intersecting two convex quads
/// produces at most 8 vertices; the extra capacity absorbs intermediate
/// clipping stages for larger inputs.
struct ConvexPolygon {
  static constexpr int kCapacity = 16;

  std::array<Vec2, kCapacity> v{};
  int n = 0;

  bool empty() const { return n == 0; }
  int size() const { return n; }
  Vec2& operator[](int i) { return v[static_cast<std::size_t>(i)]; }
  const Vec2& operator[](int i) const { return v[static_cast<std::size_t>(i)]; }

  void push_back(Vec2 p) {
    if (n >= kCapacity) throw validation_error("convex polygon capacity exceeded");
    v[static_cast<std::size_t>(n++)] = p;
  }
};

inline ConvexPolygon to_polygon(const Quad& q) {
  ConvexPolygon p;
  for (const Vec2& pt : q.v) p.push_back(pt);
  return p;
}

/// Shoelace area; positive for counter-clockwise winding.
inline double polygon_area(const ConvexPolygon& p) {
  double acc = 0.0;
  for (int i = 0; i < p.n; ++i) {
    const Vec2& a = p[i];
    const Vec2& b = p[(i + 1) % p.n];
    acc += cross(a, b);
  }
  return 0.5 * acc;
}

/// Validates 3..8 vertices, counter-clockwise convex winding, and no
/// duplicate consecutive vertices (within kGeomEps).
inline void validate(const ConvexPolygon& p) {
  if (p.n < 3 || p.n > 8) throw validation_error("convex polygon must have 3..8 vertices");
  for (int i = 0; i < p.n; ++i) {
    const Vec2 a = p[i];
    const Vec2 b = p[(i + 1) % p.n];
    const Vec2 c = p[(i + 2) % p.n];
    if (norm(b - a) <= kGeomEps) throw validation_error("duplicate consecutive vertices");
    if (cross(b - a, c - b) < -kGeomEps) {
      throw validation_error("polygon not convex counter-clockwise");
    }
  }
}

namespace detail {

inline Vec2 line_segment_intersection(Vec2 s, Vec2 e, double ds, double de) {
  // ds/de are signed distances of s/e to the clip line; signs differ.
  const double t = ds / (ds - de);
  return {s.x + t * (e.x - s.x), s.y + t * (e.y - s.y)};
}

inline ConvexPolygon dedup_vertices(const ConvexPolygon& in) {
  ConvexPolygon out;
  for (int i = 0; i < in.n; ++i) {
    if (out.n == 0 || norm(in[i] - out[out.n - 1]) > kGeomEps) out.push_back(in[i]);
  }
  while (out.n > 1 && norm(out[out.n - 1] - out[0]) <= kGeomEps) --out.n;
  return out;
}

}  // namespace detail

/// Sutherland-Hodgman clipping of one convex CCW polygon by another.
/// Returns the convex intersection, or an empty polygon when the inputs are
/// disjoint or the intersection area falls below kAreaEps.
inline ConvexPolygon clip_convex(const ConvexPolygon& subject, const ConvexPolygon& clip) {
  ConvexPolygon out = subject;
  for (int e = 0; e < clip.n && out.n > 0; ++e) {
    const Vec2 c1 = clip[e];
    const Vec2 c2 = clip[(e + 1) % clip.n];
    const Vec2 dir = c2 - c1;
    const ConvexPolygon in = out;
    out.n = 0;
    for (int i = 0; i < in.n; ++i) {
      const Vec2 cur = in[i];
      const Vec2 prev = in[(i + in.n - 1) % in.n];
      const double d_cur = cross(dir, cur - c1);
      const double d_prev = cross(dir, prev - c1);
      // Points on the clip line count as inside.
      if (d_cur >= 0.0) {
        if (d_prev < 0.0) out.push_back(detail::line_segment_intersection(prev, cur, d_prev, d_cur));
        out.push_back(cur);
      } else if (d_prev >= 0.0) {
        out.push_back(detail::line_segment_intersection(prev, cur, d_prev, d_cur));
      }
    }
  }
  out = detail::dedup_vertices(out);
  if (out.n < 3 || polygon_area(out) < kAreaEps) return ConvexPolygon{};
  return out;
}

/// Exact intersection-over-union of two rotated boxes via polygon clipping.
/// Symmetric; 1 iff the boxes cover the same point set; 0 when disjoint.
inline double skew_iou(const RotatedBox& a, const RotatedBox& b) {
  const ConvexPolygon pa = to_polygon(rbox_to_quad(a));
  const ConvexPolygon pb = to_polygon(rbox_to_quad(b));
  const ConvexPolygon inter = clip_convex(pa, pb);
  if (inter.empty()) return 0.0;
  const double ai = polygon_area(inter);
  const double u = polygon_area(pa) + polygon_area(pb) - ai;
  if (u <= 0.0) return 0.0;
  return std::clamp(ai / u, 0.0, 1.0);
}

/// Convex hull (Andrew monotone chain), counter-clockwise, collinear points
/// dropped. Returns fewer than 3 points for degenerate input.
inline std::vector<Vec2> convex_hull(std::span<const Vec2> points) {
  std::vector<Vec2> pts(points.begin(), points.end());
  std::sort(pts.begin(), pts.end(), [](Vec2 a, Vec2 b) {
    return a.x < b.x || (a.x == b.x && a.y < b.y);
  });
  pts.erase(std::unique(pts.begin(), pts.end(),
                        [](Vec2 a, Vec2 b) { return norm(a - b) <= kGeomEps; }),
            pts.end());
  const std::size_t n = pts.size();
  if (n < 3) return pts;
  std::vector<Vec2> hull(2 * n);
  std::size_t k = 0;
  for (std::size_t i = 0; i < n; ++i) {  // lower chain
    while (k >= 2 && cross(hull[k - 1] - hull[k - 2], pts[i] - hull[k - 2]) <= kGeomEps) --k;
    hull[k++] = pts[i];
  }
  for (std::size_t i = n - 1, lo = k + 1; i-- > 0;) {  // upper chain
    while (k >= lo && cross(hull[k - 1] - hull[k - 2], pts[i] - hull[k - 2]) <= kGeomEps) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

/// Reorders four points into a counter-clockwise convex quad (fixing winding
/// and crossed orderings). Throws when the points are not in convex position.
inline Quad make_quad(const std::array<Vec2, 4>& pts) {
  for (const Vec2& p : pts) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
      throw validation_error("quad vertex not finite");
    }
  }
  const std::vector<Vec2> hull = convex_hull(std::span<const Vec2>(pts.data(), pts.size()));
  if (hull.size() != 4) {
    throw validation_error("quad vertices are not in convex position");
  }
  Quad q;
  std::copy(hull.begin(), hull.end(), q.v.begin());
  return q;
}

}  // namespace rotdet
