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

#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "rotdet/dota.hpp"
#include "rotdet/errors.hpp"

namespace rotdet {

/// Declarative configuration for the CLI. Unknown keys are rejected so a
/// typo cannot silently fall back to a default.
struct Config {
  struct Loss {
    double kld_tau = 1.0;
    bool kld_reverse = false;
    // Combined-loss weights for training loops built on this library; the
    // 1.0/1.0 defaults are not verified against any original recipe.
    double probiou_weight = 1.0;
    double dfl_weight = 1.0;
    double variance_divisor = 12.0;
  } loss;

  struct Assigner {
    double alpha = 1.0;
    double beta = 6.0;
    int topk = 13;
    double fcosr_ellipse_shrink = 0.5;
    std::vector<double> fcosr_scale_breaks = {64.0, 128.0};
  } assigner;

  struct Nms {
    double score_threshold = 0.1;
    double iou_threshold = 0.1;
    bool class_aware = true;
  } nms;

  struct Tiling {
    int patch_size = 1024;
    int overlap = 256;
    std::vector<double> scales = {1.0};
    double keep_frac = 0.5;
  } tiling;

  struct Eval {
    double iou_threshold = 0.5;
    std::vector<std::string> categories = dota::dota15_categories();
  } eval;
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& known,
                                const std::string& scope) {
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) {
      throw validation_error("unknown config key '" + scope + key + "'");
    }
  }
}

}  // namespace detail

inline void validate(const Config& c) {
  if (!(c.loss.kld_tau > 0.0)) throw validation_error("loss.kld_tau must be > 0");
  if (!(c.loss.probiou_weight >= 0.0) || !(c.loss.dfl_weight >= 0.0)) {
    throw validation_error("loss weights must be >= 0");
  }
  if (!(c.loss.variance_divisor > 0.0)) throw validation_error("loss.variance_divisor must be > 0");
  if (!(c.assigner.alpha > 0.0) || !(c.assigner.beta > 0.0)) {
    throw validation_error("assigner.alpha and assigner.beta must be > 0");
  }
  if (c.assigner.topk < 1) throw validation_error("assigner.topk must be >= 1");
  if (!(c.assigner.fcosr_ellipse_shrink > 0.0 && c.assigner.fcosr_ellipse_shrink <= 1.0)) {
    throw validation_error("assigner.fcosr_ellipse_shrink must lie in (0, 1]");
  }
  double prev = 0.0;
  for (double b : c.assigner.fcosr_scale_breaks) {
    if (!(b > prev)) throw validation_error("assigner.fcosr_scale_breaks must be ascending and positive");
    prev = b;
  }
  if (!(c.nms.score_threshold >= 0.0 && c.nms.score_threshold <= 1.0)) {
    throw validation_error("nms.score_threshold must lie in [0, 1]");
  }
  if (!(c.nms.iou_threshold > 0.0 && c.nms.iou_threshold < 1.0)) {
    throw validation_error("nms.iou_threshold must lie in (0, 1)");
  }
  if (c.tiling.patch_size <= 0 || c.tiling.overlap < 0 ||
      c.tiling.overlap >= c.tiling.patch_size) {
    throw validation_error("tiling requires 0 <= overlap < patch_size");
  }
  if (c.tiling.scales.empty()) throw validation_error("tiling.scales must be non-empty");
  for (double s : c.tiling.scales) {
    if (!(s > 0.0)) throw validation_error("tiling.scales entries must be > 0");
  }
  if (!(c.tiling.keep_frac >= 0.0 && c.tiling.keep_frac <= 1.0)) {
    throw validation_error("tiling.keep_frac must lie in [0, 1]");
  }
  if (!(c.eval.iou_threshold > 0.0 && c.eval.iou_threshold < 1.0)) {
    throw validation_error("eval.iou_threshold must lie in (0, 1)");
  }
  if (c.eval.categories.empty()) throw validation_error("eval.categories must be non-empty");
  std::set<std::string> seen;
  for (const std::string& cat : c.eval.categories) {
    if (!seen.insert(cat).second) throw validation_error("eval.categories contains duplicates");
  }
}

inline Config parse_config(const nlohmann::json& j) {
  Config c;
  detail::reject_unknown_keys(j, {"loss", "assigner", "nms", "tiling", "eval"}, "");
  if (j.contains("loss")) {
    const auto& l = j.at("loss");
    detail::reject_unknown_keys(
        l, {"kld_tau", "kld_reverse", "probiou_weight", "dfl_weight", "variance_divisor"},
        "loss.");
    c.loss.kld_tau = l.value("kld_tau", c.loss.kld_tau);
    c.loss.kld_reverse = l.value("kld_reverse", c.loss.kld_reverse);
    c.loss.probiou_weight = l.value("probiou_weight", c.loss.probiou_weight);
    c.loss.dfl_weight = l.value("dfl_weight", c.loss.dfl_weight);
    c.loss.variance_divisor = l.value("variance_divisor", c.loss.variance_divisor);
  }
  if (j.contains("assigner")) {
    const auto& a = j.at("assigner");
    detail::reject_unknown_keys(
        a, {"alpha", "beta", "topk", "fcosr_ellipse_shrink", "fcosr_scale_breaks"}, "assigner.");
    c.assigner.alpha = a.value("alpha", c.assigner.alpha);
    c.assigner.beta = a.value("beta", c.assigner.beta);
    c.assigner.topk = a.value("topk", c.assigner.topk);
    c.assigner.fcosr_ellipse_shrink = a.value("fcosr_ellipse_shrink", c.assigner.fcosr_ellipse_shrink);
    if (a.contains("fcosr_scale_breaks")) {
      c.assigner.fcosr_scale_breaks = a.at("fcosr_scale_breaks").get<std::vector<double>>();
    }
  }
  if (j.contains("nms")) {
    const auto& n = j.at("nms");
    detail::reject_unknown_keys(n, {"score_threshold", "iou_threshold", "class_aware"}, "nms.");
    c.nms.score_threshold = n.value("score_threshold", c.nms.score_threshold);
    c.nms.iou_threshold = n.value("iou_threshold", c.nms.iou_threshold);
    c.nms.class_aware = n.value("class_aware", c.nms.class_aware);
  }
  if (j.contains("tiling")) {
    const auto& t = j.at("tiling");
    detail::reject_unknown_keys(t, {"patch_size", "overlap", "scales", "keep_frac"}, "tiling.");
    c.tiling.patch_size = t.value("patch_size", c.tiling.patch_size);
    c.tiling.overlap = t.value("overlap", c.tiling.overlap);
    if (t.contains("scales")) c.tiling.scales = t.at("scales").get<std::vector<double>>();
    c.tiling.keep_frac = t.value("keep_frac", c.tiling.keep_frac);
  }
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    detail::reject_unknown_keys(e, {"iou_threshold", "categories"}, "eval.");
    c.eval.iou_threshold = e.value("iou_threshold", c.eval.iou_threshold);
    if (e.contains("categories")) {
      c.eval.categories = e.at("categories").get<std::vector<std::string>>();
    }
  }
  validate(c);
  return c;
}

inline Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw validation_error("cannot open config file: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw validation_error("config parse error: " + std::string(e.what()));
  }
  try {
    return parse_config(j);
  } catch (const nlohmann::json::exception& e) {
    throw validation_error("config type error: " + std::string(e.what()));
  }
}

}  // namespace rotdet
