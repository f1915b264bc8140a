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
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rotdet/errors.hpp"
#include "rotdet/geometry.hpp"
#include "rotdet/postprocess.hpp"

namespace rotdet::dota {

/// One DOTA annotation line: a quad, a category token, and a difficulty
/// flag (difficulty 1 instances are ignored by the evaluator).
struct Annotation {
  Quad quad;
  std::string category;
  int difficulty = 0;
};

struct LineError {
  int line = 0;
  std::string message;
};

struct ParseResult {
  std::vector<Annotation> annotations;
  std::vector<LineError> errors;
};

/// The 15 DOTA 1.0 categories in the conventional order.
inline const std::vector<std::string>& dota15_categories() {
  static const std::vector<std::string> cats = {
      "plane",        "baseball-diamond", "bridge",       "ground-track-field",
      "small-vehicle", "large-vehicle",   "ship",         "tennis-court",
      "basketball-court", "storage-tank", "soccer-ball-field", "roundabout",
      "harbor",       "swimming-pool",    "helicopter"};
  return cats;
}

/// Two/three-letter display code for a DOTA category; other categories are
/// returned unchanged.
inline std::string short_code(const std::string& category) {
  static const std::map<std::string, std::string> codes = {
      {"plane", "PL"},        {"baseball-diamond", "BD"}, {"bridge", "BR"},
      {"ground-track-field", "GTF"}, {"small-vehicle", "SV"}, {"large-vehicle", "LV"},
      {"ship", "SH"},         {"tennis-court", "TC"},     {"basketball-court", "BC"},
      {"storage-tank", "ST"}, {"soccer-ball-field", "SBF"}, {"roundabout", "RA"},
      {"harbor", "HA"},       {"swimming-pool", "SP"},    {"helicopter", "HC"}};
  const auto it = codes.find(category);
  return it != codes.end() ? it->second : category;
}

namespace detail {

inline std::vector<std::string> tokenize(std::string_view line) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.emplace_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

inline std::optional<double> parse_double(const std::string& tok) {
  double value = 0.0;
  const auto* begin = tok.data();
  const auto* end = tok.data() + tok.size();
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc{} || ptr != end || !std::isfinite(value)) return std::nullopt;
  return value;
}

}  // namespace detail

/// Parses DOTA annotation text: one "x1 y1 x2 y2 x3 y3 x4 y4 category
/// difficulty" record per line. Header lines whose first token is not
/// numeric are skipped. Malformed lines are collected with their line
/// numbers instead of aborting the parse.
inline ParseResult parse_dota(std::string_view text) {
  ParseResult out;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const std::string_view line =
        text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    const std::vector<std::string> toks = detail::tokenize(line);
    if (toks.empty()) continue;
    if (!detail::parse_double(toks[0])) continue;  // header line
    if (toks.size() != 10) {
      out.errors.push_back({line_no, "expected 10 tokens, got " + std::to_string(toks.size())});
      continue;
    }
    std::array<Vec2, 4> pts;
    bool ok = true;
    for (int i = 0; i < 4 && ok; ++i) {
      const auto x = detail::parse_double(toks[static_cast<std::size_t>(2 * i)]);
      const auto y = detail::parse_double(toks[static_cast<std::size_t>(2 * i + 1)]);
      if (!x || !y) {
        out.errors.push_back({line_no, "non-numeric coordinate"});
        ok = false;
      } else {
        pts[static_cast<std::size_t>(i)] = {*x, *y};
      }
    }
    if (!ok) continue;
    if (toks[9] != "0" && toks[9] != "1") {
      out.errors.push_back({line_no, "difficulty must be 0 or 1"});
      continue;
    }
    Annotation anno;
    try {
      anno.quad = make_quad(pts);
    } catch (const validation_error& e) {
      out.errors.push_back({line_no, e.what()});
      continue;
    }
    anno.category = toks[8];
    anno.difficulty = toks[9] == "1" ? 1 : 0;
    out.annotations.push_back(std::move(anno));
  }
  return out;
}

/// Minimum-area enclosing rotated rectangle of the quad, computed over the
/// hull edge directions (the optimum has a side collinear with a hull edge).
/// Canonicalized. Throws on collinear input.
inline RotatedBox quad_to_rbox(const Quad& q) {
  const std::vector<Vec2> hull = convex_hull(std::span<const Vec2>(q.v.data(), q.v.size()));
  if (hull.size() < 3) throw validation_error("degenerate quad: vertices are collinear");
  double best_area = std::numeric_limits<double>::infinity();
  RotatedBox best{};
  for (std::size_t e = 0; e < hull.size(); ++e) {
    const Vec2 a = hull[e];
    const Vec2 b = hull[(e + 1) % hull.size()];
    const double len = norm(b - a);
    const Vec2 d{(b.x - a.x) / len, (b.y - a.y) / len};
    const Vec2 dp{-d.y, d.x};
    double umin = std::numeric_limits<double>::infinity(), umax = -umin;
    double vmin = umin, vmax = -umin;
    for (const Vec2& p : hull) {
      const double u = dot(p, d);
      const double v = dot(p, dp);
      umin = std::min(umin, u);
      umax = std::max(umax, u);
      vmin = std::min(vmin, v);
      vmax = std::max(vmax, v);
    }
    const double w = umax - umin;
    const double h = vmax - vmin;
    const double area = w * h;
    if (area < best_area) {
      best_area = area;
      if (!(w > 0.0 && h > 0.0)) throw validation_error("degenerate quad: zero extent");
      const double uc = 0.5 * (umin + umax);
      const double vc = 0.5 * (vmin + vmax);
      best = {uc * d.x + vc * dp.x, uc * d.y + vc * dp.y, w, h, std::atan2(d.y, d.x)};
    }
  }
  return canonicalize(best);
}

/// Tiling protocol: per scale, the (scaled) image is covered by
/// patch_size x patch_size crops with the given overlap.
struct TileSpec {
  int patch_size = 1024;
  int overlap = 256;
  std::vector<double> scales = {1.0};
};

inline void validate(const TileSpec& s) {
  if (s.patch_size <= 0 || s.overlap < 0 || s.overlap >= s.patch_size) {
    throw validation_error("tile spec requires 0 <= overlap < patch_size");
  }
  if (s.scales.empty()) throw validation_error("tile spec requires at least one scale");
  for (double sc : s.scales) {
    if (!(sc > 0.0) || !std::isfinite(sc)) throw validation_error("tile scales must be positive");
  }
}

/// Single-scale preset: 1024 px patches, 256 px overlap.
inline TileSpec dota_ss() { return {1024, 256, {1.0}}; }
/// Multi-scale preset: scales 0.5/1.0/1.5, 1024 px patches, 500 px overlap.
inline TileSpec dota_ms() { return {1024, 500, {0.5, 1.0, 1.5}}; }

/// A crop at (x0, y0) on the image rescaled by `scale`.
struct Tile {
  double scale = 1.0;
  long x0 = 0;
  long y0 = 0;
};

/// Offsets 0, stride, 2*stride, ... with stride = patch - overlap; the final
/// offset is clamped so the patch's far edge meets the image edge. Images
/// smaller than the patch get the single offset 0.
inline std::vector<long> tile_offsets(long scaled_size, int patch, int overlap) {
  std::vector<long> offsets;
  if (scaled_size <= patch) {
    offsets.push_back(0);
    return offsets;
  }
  const long stride = patch - overlap;
  for (long o = 0; o + patch < scaled_size; o += stride) offsets.push_back(o);
  offsets.push_back(scaled_size - patch);
  return offsets;
}

inline std::vector<Tile> plan_tiles(long image_w, long image_h, const TileSpec& spec) {
  validate(spec);
  if (image_w <= 0 || image_h <= 0) throw validation_error("image dimensions must be positive");
  std::vector<Tile> tiles;
  for (double scale : spec.scales) {
    const long sw = std::lround(image_w * scale);
    const long sh = std::lround(image_h * scale);
    const std::vector<long> xs = tile_offsets(sw, spec.patch_size, spec.overlap);
    const std::vector<long> ys = tile_offsets(sh, spec.patch_size, spec.overlap);
    for (long y0 : ys) {
      for (long x0 : xs) tiles.push_back({scale, x0, y0});
    }
  }
  return tiles;
}

namespace detail {

inline double quad_area(const Quad& q) { return polygon_area(to_polygon(q)); }

inline ConvexPolygon rect_polygon(double x0, double y0, double x1, double y1) {
  ConvexPolygon p;
  p.push_back({x0, y0});
  p.push_back({x1, y0});
  p.push_back({x1, y1});
  p.push_back({x0, y1});
  return p;
}

}  // namespace detail

/// Annotations intersecting the tile, rescaled and translated into tile
/// coordinates. An annotation is kept when at least keep_frac of its area
/// lies inside the tile.
inline std::vector<Annotation> clip_annotations_to_tile(const std::vector<Annotation>& annos,
                                                        const Tile& tile, int patch_size,
                                                        double keep_frac = 0.5) {
  if (!(keep_frac >= 0.0 && keep_frac <= 1.0)) {
    throw validation_error("keep_frac must lie in [0, 1]");
  }
  std::vector<Annotation> out;
  const ConvexPolygon tile_rect = detail::rect_polygon(
      tile.x0, tile.y0, tile.x0 + static_cast<double>(patch_size),
      tile.y0 + static_cast<double>(patch_size));
  for (const Annotation& a : annos) {
    Quad scaled = a.quad;
    for (Vec2& p : scaled.v) p = {p.x * tile.scale, p.y * tile.scale};
    const ConvexPolygon inter = clip_convex(to_polygon(scaled), tile_rect);
    const double qa = detail::quad_area(scaled);
    const double frac = inter.empty() || qa <= 0.0 ? 0.0 : polygon_area(inter) / qa;
    if (frac < keep_frac || frac == 0.0) continue;
    Annotation kept = a;
    kept.quad = scaled;
    for (Vec2& p : kept.quad.v) p = {p.x - tile.x0, p.y - tile.y0};
    out.push_back(std::move(kept));
  }
  return out;
}

/// Maps per-tile detections back to source-image coordinates (undo the tile
/// translation, then the scale), concatenates them, and runs class-aware
/// rotated NMS.
inline std::vector<Detection> merge_tile_detections(
    const std::vector<std::pair<Tile, std::vector<Detection>>>& per_tile,
    double iou_threshold) {
  std::vector<Detection> all;
  for (const auto& [tile, dets] : per_tile) {
    for (Detection d : dets) {
      d.box.cx = (d.box.cx + tile.x0) / tile.scale;
      d.box.cy = (d.box.cy + tile.y0) / tile.scale;
      d.box.w /= tile.scale;
      d.box.h /= tile.scale;
      all.push_back(d);
    }
  }
  return rotated_nms(all, iou_threshold, /*class_aware=*/true);
}

struct ClassEval {
  std::string category;
  int num_gt = 0;  // non-difficult ground truths
  bool has_gt = false;
  double ap = 0.0;
  std::vector<double> precision, recall;
};

struct EvalReport {
  std::vector<ClassEval> per_class;
  double map = 0.0;  // mean AP over classes with >= 1 gt
};

namespace detail {

/// All-points interpolated area under the precision/recall curve.
inline double average_precision(const std::vector<double>& precision,
                                const std::vector<double>& recall) {
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t k = 0; k < recall.size(); ++k) {
    double envelope = 0.0;
    for (std::size_t j = k; j < precision.size(); ++j) envelope = std::max(envelope, precision[j]);
    ap += (recall[k] - prev_recall) * envelope;
    prev_recall = recall[k];
  }
  return ap;
}

}  // namespace detail

/// VOC-style evaluation with SkewIoU matching. Detections are matched
/// greedily in descending score order to the unmatched gt with the highest
/// IoU >= threshold; difficulty-1 gts absorb matching detections without
/// counting as TP or FP and are excluded from the gt total. AP uses
/// all-points interpolation; mAP averages classes with at least one gt.
inline EvalReport evaluate_map(const std::map<std::string, std::vector<Annotation>>& gts,
                               const std::map<std::string, std::vector<Detection>>& dets,
                               const std::vector<std::string>& categories,
                               double iou_threshold = 0.5) {
  if (categories.empty()) throw validation_error("category vocabulary is empty");
  if (!(iou_threshold > 0.0 && iou_threshold < 1.0)) {
    throw validation_error("evaluation iou threshold must lie in (0, 1)");
  }
  std::map<std::string, int> cat_index;
  for (std::size_t i = 0; i < categories.size(); ++i) {
    cat_index[categories[i]] = static_cast<int>(i);
  }

  struct GtEntry {
    RotatedBox box;
    bool difficult;
    bool matched = false;
  };
  // (class, image) -> gt entries
  std::map<std::pair<int, std::string>, std::vector<GtEntry>> gt_table;
  std::vector<int> npos(categories.size(), 0);
  std::vector<bool> has_any_gt(categories.size(), false);
  for (const auto& [image, annos] : gts) {
    for (const Annotation& a : annos) {
      const auto it = cat_index.find(a.category);
      if (it == cat_index.end()) {
        throw validation_error("ground-truth category '" + a.category +
                               "' is not in the vocabulary");
      }
      gt_table[{it->second, image}].push_back({quad_to_rbox(a.quad), a.difficulty == 1});
      has_any_gt[static_cast<std::size_t>(it->second)] = true;
      if (a.difficulty == 0) ++npos[static_cast<std::size_t>(it->second)];
    }
  }

  struct Det {
    std::string image;
    Detection det;
  };
  std::vector<std::vector<Det>> per_class(categories.size());
  for (const auto& [image, list] : dets) {
    for (const Detection& d : list) {
      if (d.class_id < 0 || d.class_id >= static_cast<int>(categories.size())) {
        throw validation_error("detection class id " + std::to_string(d.class_id) +
                               " is not in the vocabulary");
      }
      if (!(d.score >= 0.0 && d.score <= 1.0)) {
        throw validation_error("detection scores must lie in [0, 1]");
      }
      per_class[static_cast<std::size_t>(d.class_id)].push_back({image, d});
    }
  }

  EvalReport report;
  double ap_sum = 0.0;
  int classes_with_gt = 0;
  for (std::size_t c = 0; c < categories.size(); ++c) {
    ClassEval ce;
    ce.category = categories[c];
    ce.num_gt = npos[c];
    ce.has_gt = npos[c] > 0;
    auto& class_dets = per_class[c];
    // Canonical order: score desc, then image id and content, so the result
    // is invariant to input file order.
    std::sort(class_dets.begin(), class_dets.end(), [](const Det& a, const Det& b) {
      if (a.det.score != b.det.score) return a.det.score > b.det.score;
      if (a.image != b.image) return a.image < b.image;
      const RotatedBox& x = a.det.box;
      const RotatedBox& y = b.det.box;
      return std::tie(x.cx, x.cy, x.w, x.h, x.theta) < std::tie(y.cx, y.cy, y.w, y.h, y.theta);
    });
    int tp = 0, fp = 0;
    for (const Det& d : class_dets) {
      auto it = gt_table.find({static_cast<int>(c), d.image});
      GtEntry* best = nullptr;
      double best_iou = 0.0;
      if (it != gt_table.end()) {
        for (GtEntry& g : it->second) {
          if (g.matched && !g.difficult) continue;
          const double iou = skew_iou(d.det.box, g.box);
          if (iou > best_iou) {
            best_iou = iou;
            best = &g;
          }
        }
      }
      if (best != nullptr && best_iou >= iou_threshold) {
        if (best->difficult) continue;  // neither TP nor FP
        best->matched = true;
        ++tp;
      } else {
        ++fp;
      }
      ce.precision.push_back(static_cast<double>(tp) / (tp + fp));
      ce.recall.push_back(npos[c] > 0 ? static_cast<double>(tp) / npos[c] : 0.0);
    }
    ce.ap = npos[c] > 0 ? detail::average_precision(ce.precision, ce.recall) : 0.0;
    if (ce.has_gt) {
      ap_sum += ce.ap;
      ++classes_with_gt;
    }
    report.per_class.push_back(std::move(ce));
  }
  report.map = classes_with_gt > 0 ? ap_sum / classes_with_gt : 0.0;
  return report;
}

// ---------------------------------------------------------------------------
// DOTA task-1 submission format: one file per class named
// Task1_<category>.txt, lines "image_id score x1 y1 x2 y2 x3 y3 x4 y4"
// with scores printed to 4 decimals and coordinates to 2.
// ---------------------------------------------------------------------------

inline std::string format_detection_line(const std::string& image_id, const Detection& det) {
  const Quad q = rbox_to_quad(det.box);
  char buf[288];
  std::snprintf(buf, sizeof(buf), "%s %.4f %.2f %.2f %.2f %.2f %.2f %.2f %.2f %.2f",
                image_id.c_str(), det.score, q.v[0].x, q.v[0].y, q.v[1].x, q.v[1].y,
                q.v[2].x, q.v[2].y, q.v[3].x, q.v[3].y);
  return buf;
}

inline void write_detection_files(const std::filesystem::path& dir,
                                  const std::map<std::string, std::vector<Detection>>& dets,
                                  const std::vector<std::string>& categories) {
  std::filesystem::create_directories(dir);
  for (std::size_t c = 0; c < categories.size(); ++c) {
    std::vector<std::pair<std::string, Detection>> rows;
    for (const auto& [image, list] : dets) {
      for (const Detection& d : list) {
        if (d.class_id == static_cast<int>(c)) rows.emplace_back(image, d);
      }
    }
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first < b.first;
      return a.second.score > b.second.score;
    });
    std::ofstream out(dir / ("Task1_" + categories[c] + ".txt"));
    for (const auto& [image, d] : rows) out << format_detection_line(image, d) << "\n";
  }
}

/// Reads per-class detection files (Task1_<cat>.txt or <cat>.txt) from a
/// directory; the class id is the category's index in the vocabulary.
/// Throws validation_error when a file's category is not in the vocabulary.
inline std::map<std::string, std::vector<Detection>> read_detection_files(
    const std::filesystem::path& dir, const std::vector<std::string>& categories) {
  std::map<std::string, int> cat_index;
  for (std::size_t i = 0; i < categories.size(); ++i) {
    cat_index[categories[i]] = static_cast<int>(i);
  }
  std::map<std::string, std::vector<Detection>> out;
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() == ".txt") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& file : files) {
    std::string cat = file.stem().string();
    if (cat.rfind("Task1_", 0) == 0) cat = cat.substr(6);
    const auto it = cat_index.find(cat);
    if (it == cat_index.end()) {
      throw validation_error("detection file category '" + cat + "' is not in the vocabulary");
    }
    std::ifstream in(file);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const std::vector<std::string> toks = detail::tokenize(line);
      if (toks.empty()) continue;
      if (toks.size() != 10) {
        throw validation_error(file.string() + ":" + std::to_string(line_no) +
                               ": expected 10 tokens");
      }
      std::array<Vec2, 4> pts;
      const auto score = detail::parse_double(toks[1]);
      bool ok = score.has_value();
      for (int i = 0; i < 4 && ok; ++i) {
        const auto x = detail::parse_double(toks[static_cast<std::size_t>(2 + 2 * i)]);
        const auto y = detail::parse_double(toks[static_cast<std::size_t>(3 + 2 * i)]);
        if (!x || !y) {
          ok = false;
        } else {
          pts[static_cast<std::size_t>(i)] = {*x, *y};
        }
      }
      if (!ok) {
        throw validation_error(file.string() + ":" + std::to_string(line_no) +
                               ": non-numeric field");
      }
      out[toks[0]].push_back({quad_to_rbox(make_quad(pts)), *score, it->second});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Tile manifest: "<tile_id> <image> <scale> <x0> <y0> <patch>" per line.
// ---------------------------------------------------------------------------

struct TilePlacement {
  std::string tile_id;
  std::string image;
  Tile tile;
  int patch_size = 1024;
};

inline std::string tile_id(const std::string& image, const Tile& t) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%s__%g__%ld___%ld", image.c_str(), t.scale, t.x0, t.y0);
  return buf;
}

inline void write_manifest(const std::filesystem::path& path,
                           const std::vector<TilePlacement>& tiles) {
  std::ofstream out(path);
  out << "# tile_id image scale x0 y0 patch_size\n";
  for (const TilePlacement& t : tiles) {
    char buf[244];
    std::snprintf(buf, sizeof(buf), "%s %s %g %ld %ld %d", t.tile_id.c_str(), t.image.c_str(),
                  t.tile.scale, t.tile.x0, t.tile.y0, t.patch_size);
    out << buf << "\n";
  }
}

inline std::vector<TilePlacement> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw validation_error("cannot open manifest: " + path.string());
  std::vector<TilePlacement> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line[0] == '#') continue;
    const std::vector<std::string> toks = detail::tokenize(line);
    if (toks.empty()) continue;
    if (toks.size() != 6) {
      throw validation_error(path.string() + ":" + std::to_string(line_no) +
                             ": expected 6 fields");
    }
    const auto scale = detail::parse_double(toks[2]);
    const auto x0 = detail::parse_double(toks[3]);
    const auto y0 = detail::parse_double(toks[4]);
    const auto patch = detail::parse_double(toks[5]);
    if (!scale || !x0 || !y0 || !patch) {
      throw validation_error(path.string() + ":" + std::to_string(line_no) +
                             ": non-numeric field");
    }
    out.push_back({toks[0], toks[1],
                   Tile{*scale, static_cast<long>(*x0), static_cast<long>(*y0)},
                   static_cast<int>(*patch)});
  }
  return out;
}

}  // namespace rotdet::dota
