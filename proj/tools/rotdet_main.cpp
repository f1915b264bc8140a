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

// rotdet CLI: DOTA tiling, rotated-mAP evaluation, rotated NMS, numerical
// self-checks and kernel benchmarks.
//
// Exit codes: 0 success, 1 self-check/verify failure, 2 I/O error,
// 3 data-contract error.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rotdet/config.hpp"
#include "rotdet/reference.hpp"
#include "rotdet/rotdet.hpp"
#include "rotdet/selfcheck.hpp"

#include "raster_size.hpp"

namespace fs = std::filesystem;
using namespace rotdet;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitIo = 2;
constexpr int kExitData = 3;

struct io_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// tile
// ---------------------------------------------------------------------------

struct TileArgs {
  std::string annos_dir;
  std::string out_dir;
  std::string images_dir;
  std::string sizes_file;
  std::string preset;
  int patch = 0;
  int overlap = -1;
  std::vector<double> scales;
  double keep_frac = -1.0;
};

std::map<std::string, tools::ImageSize> collect_image_sizes(const TileArgs& args) {
  std::map<std::string, tools::ImageSize> sizes;
  if (!args.sizes_file.empty()) {
    const fs::path path = args.sizes_file;
    if (!fs::exists(path)) throw io_error("cannot read " + path.string());
    std::ifstream in(path);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty() || line[0] == '#') continue;
      std::istringstream ss(line);
      std::string id;
      long w = 0, h = 0;
      if (!(ss >> id >> w >> h) || w <= 0 || h <= 0) {
        throw validation_error(path.string() + ":" + std::to_string(line_no) +
                               ": expected 'image_id width height'");
      }
      sizes[id] = {w, h};
    }
  }
  if (!args.images_dir.empty()) {
    const fs::path dir = args.images_dir;
    if (!fs::is_directory(dir)) throw io_error("cannot read directory " + dir.string());
    for (const auto& entry : fs::directory_iterator(dir)) {
      const std::string ext = entry.path().extension().string();
      if (ext != ".png" && ext != ".jpg" && ext != ".jpeg") continue;
      const std::string id = entry.path().stem().string();
      if (sizes.count(id)) continue;  // an explicit sizes entry wins
      const auto size = tools::read_image_size(entry.path());
      if (!size) throw validation_error("cannot determine dimensions of " + entry.path().string());
      sizes[id] = *size;
    }
  }
  if (sizes.empty()) {
    throw validation_error("no input images: pass --images and/or --sizes");
  }
  return sizes;
}

dota::TileSpec resolve_tile_spec(const Config& config, const TileArgs& args) {
  dota::TileSpec spec{config.tiling.patch_size, config.tiling.overlap, config.tiling.scales};
  if (args.preset == "dota-ss") spec = dota::dota_ss();
  if (args.preset == "dota-ms") spec = dota::dota_ms();
  if (args.patch > 0) spec.patch_size = args.patch;
  if (args.overlap >= 0) spec.overlap = args.overlap;
  if (!args.scales.empty()) spec.scales = args.scales;
  validate(spec);
  return spec;
}

int run_tile(const Config& config, const TileArgs& args) {
  const dota::TileSpec spec = resolve_tile_spec(config, args);
  const double keep_frac = args.keep_frac >= 0.0 ? args.keep_frac : config.tiling.keep_frac;
  const std::map<std::string, tools::ImageSize> sizes = collect_image_sizes(args);

  const fs::path annos_dir = args.annos_dir;
  const fs::path out_dir = args.out_dir;
  std::error_code ec;
  fs::create_directories(out_dir / "annotations", ec);
  if (ec) throw io_error("cannot create output directory " + out_dir.string());

  std::vector<dota::TilePlacement> manifest;
  long total_tiles = 0;
  for (const auto& [image, size] : sizes) {
    const fs::path anno_path = annos_dir / (image + ".txt");
    if (!fs::exists(anno_path)) throw io_error("missing annotation file " + anno_path.string());
    const dota::ParseResult parsed = dota::parse_dota(read_text_file(anno_path));
    for (const dota::LineError& e : parsed.errors) {
      std::cerr << "warning: " << anno_path.string() << ":" << e.line << ": " << e.message
                << "\n";
    }
    const std::vector<dota::Tile> tiles = dota::plan_tiles(size.width, size.height, spec);
    for (const dota::Tile& tile : tiles) {
      const std::string id = dota::tile_id(image, tile);
      manifest.push_back({id, image, tile, spec.patch_size});
      const std::vector<dota::Annotation> clipped =
          dota::clip_annotations_to_tile(parsed.annotations, tile, spec.patch_size, keep_frac);
      std::ofstream out(out_dir / "annotations" / (id + ".txt"));
      if (!out) throw io_error("cannot write tile annotations under " + out_dir.string());
      for (const dota::Annotation& a : clipped) {
        char buf[256];
        std::snprintf(buf, sizeof(buf), "%.2f %.2f %.2f %.2f %.2f %.2f %.2f %.2f %s %d",
                      a.quad.v[0].x, a.quad.v[0].y, a.quad.v[1].x, a.quad.v[1].y, a.quad.v[2].x,
                      a.quad.v[2].y, a.quad.v[3].x, a.quad.v[3].y, a.category.c_str(),
                      a.difficulty);
        out << buf << "\n";
      }
    }
    std::printf("%s: %zu tiles\n", image.c_str(), tiles.size());
    total_tiles += static_cast<long>(tiles.size());
  }
  dota::write_manifest(out_dir / "manifest.txt", manifest);
  std::printf("total: %ld tiles over %zu images -> %s\n", total_tiles, sizes.size(),
              (out_dir / "manifest.txt").string().c_str());
  return kExitOk;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string gt_dir;
  std::string det_dir;
  std::string report_path;
  double iou = -1.0;
};

int run_eval(const Config& config, const EvalArgs& args) {
  const fs::path gt_dir = args.gt_dir;
  const fs::path det_dir = args.det_dir;
  if (!fs::is_directory(gt_dir)) throw io_error("cannot read directory " + gt_dir.string());
  if (!fs::is_directory(det_dir)) throw io_error("cannot read directory " + det_dir.string());
  const double iou = args.iou > 0.0 ? args.iou : config.eval.iou_threshold;

  std::map<std::string, std::vector<dota::Annotation>> gts;
  std::vector<fs::path> gt_files;
  for (const auto& entry : fs::directory_iterator(gt_dir)) {
    if (entry.path().extension() == ".txt") gt_files.push_back(entry.path());
  }
  std::sort(gt_files.begin(), gt_files.end());
  for (const fs::path& file : gt_files) {
    const dota::ParseResult parsed = dota::parse_dota(read_text_file(file));
    for (const dota::LineError& e : parsed.errors) {
      std::cerr << "warning: " << file.string() << ":" << e.line << ": " << e.message << "\n";
    }
    gts[file.stem().string()] = parsed.annotations;
  }

  const std::map<std::string, std::vector<Detection>> dets =
      dota::read_detection_files(det_dir, config.eval.categories);
  const dota::EvalReport report = dota::evaluate_map(gts, dets, config.eval.categories, iou);

  // Table in the usual column layout, APs in percent.
  std::string header, row;
  for (const dota::ClassEval& ce : report.per_class) {
    char cell[64];
    const std::string code = dota::short_code(ce.category);
    std::snprintf(cell, sizeof(cell), "%-7s", code.c_str());
    header += cell;
    if (ce.has_gt) {
      std::snprintf(cell, sizeof(cell), "%-7.2f", 100.0 * ce.ap);
    } else {
      std::snprintf(cell, sizeof(cell), "%-7s", "-");
    }
    row += cell;
  }
  std::printf("%smAP\n%s%.2f\n", header.c_str(), row.c_str(), 100.0 * report.map);

  if (!args.report_path.empty()) {
    std::ofstream out(args.report_path);
    if (!out) throw io_error("cannot write report " + args.report_path);
    char buf[160];
    for (const dota::ClassEval& ce : report.per_class) {
      std::snprintf(buf, sizeof(buf), "%s=%.6f", ce.category.c_str(), ce.ap);
      out << buf << "\n";
    }
    std::snprintf(buf, sizeof(buf), "mAP=%.6f", report.map);
    out << buf << "\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// nms
// ---------------------------------------------------------------------------

struct NmsArgs {
  std::string dets_file;
  std::string out_file;
  std::string manifest_file;
  double iou = -1.0;
};

// Single task-1 format file (one class): "image_id score x1 y1 ... y4".
std::map<std::string, std::vector<Detection>> read_task1_file(const fs::path& path) {
  if (!fs::exists(path)) throw io_error("cannot read " + path.string());
  std::map<std::string, std::vector<Detection>> out;
  std::ifstream in(path);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::string id;
    double score = 0;
    std::array<Vec2, 4> pts;
    if (!(ss >> id >> score >> pts[0].x >> pts[0].y >> pts[1].x >> pts[1].y >> pts[2].x >>
          pts[2].y >> pts[3].x >> pts[3].y)) {
      if (line.empty()) continue;
      throw validation_error(path.string() + ":" + std::to_string(line_no) +
                             ": expected 'image_id score x1 y1 ... y4'");
    }
    out[id].push_back({dota::quad_to_rbox(make_quad(pts)), score, 0});
  }
  return out;
}

int run_nms(const Config& config, const NmsArgs& args) {
  const double iou = args.iou > 0.0 ? args.iou : config.nms.iou_threshold;
  std::map<std::string, std::vector<Detection>> per_image = read_task1_file(args.dets_file);

  if (!args.manifest_file.empty()) {
    // Detections are per tile; translate them back to source images first.
    const std::vector<dota::TilePlacement> manifest = dota::read_manifest(args.manifest_file);
    std::map<std::string, dota::TilePlacement> by_id;
    for (const dota::TilePlacement& t : manifest) by_id[t.tile_id] = t;
    std::map<std::string, std::vector<std::pair<dota::Tile, std::vector<Detection>>>> grouped;
    for (auto& [tile_id, dets] : per_image) {
      const auto it = by_id.find(tile_id);
      if (it == by_id.end()) {
        throw validation_error("detection tile id '" + tile_id + "' is not in the manifest");
      }
      grouped[it->second.image].emplace_back(it->second.tile, std::move(dets));
    }
    per_image.clear();
    for (auto& [image, tiles] : grouped) {
      per_image[image] = dota::merge_tile_detections(tiles, iou);
    }
  } else {
    for (auto& [image, dets] : per_image) {
      dets = rotated_nms(dets, iou, /*class_aware=*/false);
    }
  }

  std::ofstream out(args.out_file);
  if (!out) throw io_error("cannot write " + args.out_file);
  long kept = 0;
  for (const auto& [image, dets] : per_image) {
    for (const Detection& d : dets) {
      out << dota::format_detection_line(image, d) << "\n";
      ++kept;
    }
  }
  std::printf("kept %ld detections over %zu images -> %s\n", kept, per_image.size(),
              args.out_file.c_str());
  return kExitOk;
}

// ---------------------------------------------------------------------------
// selfcheck
// ---------------------------------------------------------------------------

int run_selfcheck_cmd(std::uint64_t seed, const std::string& only, const std::string& fault_name) {
  selfcheck::Fault fault = selfcheck::Fault::none;
  if (fault_name == "probiou-grad-sign") {
    fault = selfcheck::Fault::probiou_grad_sign;
  } else if (!fault_name.empty()) {
    throw validation_error("unknown fault '" + fault_name + "'");
  }
  const auto start = std::chrono::steady_clock::now();
  const std::vector<selfcheck::CheckResult> results = selfcheck::run_selfcheck(seed, fault, only);
  int passed = 0;
  for (const selfcheck::CheckResult& r : results) {
    std::printf("[%s] %-24s max_err=%.3e limit=%.3e (%.1fs) %s\n", r.passed ? "PASS" : "FAIL",
                r.name.c_str(), r.max_error, r.limit, r.seconds, r.detail.c_str());
    if (r.passed) ++passed;
  }
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::printf("selfcheck: %d/%zu checks passed (seed %llu, %.1fs)\n", passed, results.size(),
              static_cast<unsigned long long>(seed), elapsed);
  return passed == static_cast<int>(results.size()) ? kExitOk : kExitCheckFailed;
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

struct BenchArgs {
  std::string kernel;
  long n = 100000;
  bool verify = false;
};

int run_bench(const BenchArgs& args, std::uint64_t seed) {
  if (args.n < 1) throw validation_error("--n must be >= 1");
  Rng rng(seed);
  using Clock = std::chrono::steady_clock;

  if (args.kernel == "skew_iou" || args.kernel == "probiou") {
    std::vector<std::pair<RotatedBox, RotatedBox>> pairs;
    pairs.reserve(static_cast<std::size_t>(args.n));
    for (long i = 0; i < args.n; ++i) {
      pairs.emplace_back(reference::random_box(rng), reference::random_box(rng));
    }
    double checksum = 0.0;
    const auto start = Clock::now();
    if (args.kernel == "skew_iou") {
      for (const auto& [a, b] : pairs) checksum += skew_iou(a, b);
    } else {
      for (const auto& [a, b] : pairs) {
        const LossGrad lg = probiou_loss(a, b);
        checksum += lg.value + 1e-3 * (lg.grad[0] + lg.grad[4]);
      }
    }
    const double elapsed = std::chrono::duration<double>(Clock::now() - start).count();
    std::printf("%s: n=%ld in %.3fs -> %.0f pairs/s (checksum %.6f, seed %llu)\n",
                args.kernel.c_str(), args.n, elapsed, args.n / std::max(elapsed, 1e-9),
                checksum, static_cast<unsigned long long>(seed));
    if (args.verify) {
      const long probe = std::min<long>(args.n, 20);
      double worst = 0.0;
      for (long i = 0; i < probe; ++i) {
        const auto& [a, b] = pairs[static_cast<std::size_t>(i)];
        if (args.kernel == "skew_iou") {
          worst = std::max(worst, std::abs(skew_iou(a, b) - reference::mc_skew_iou(a, b, 1000000, rng)));
          if (worst > 5e-3) break;
        } else {
          const LossGrad lg = probiou_loss(a, b);
          const auto fd = reference::central_difference(
              [&](const RotatedBox& p) { return probiou_loss(p, b).value; }, a);
          for (int k = 0; k < 5; ++k) {
            const double rel = std::abs(lg.grad[static_cast<std::size_t>(k)] - fd[static_cast<std::size_t>(k)]) /
                               std::max({std::abs(lg.grad[static_cast<std::size_t>(k)]),
                                         std::abs(fd[static_cast<std::size_t>(k)]), 1e-4});
            worst = std::max(worst, rel);
          }
        }
      }
      const double limit = args.kernel == "skew_iou" ? 5e-3 : 1e-4;
      std::printf("verify: %ld samples, max err %.3e (limit %.0e)\n", probe, worst, limit);
      if (worst > limit) return kExitCheckFailed;
    }
    return kExitOk;
  }

  if (args.kernel == "nms") {
    std::vector<Detection> dets;
    for (long i = 0; i < args.n; ++i) {
      dets.push_back({reference::random_box(rng, {0.0, 200.0, 5.0, 30.0, 0.0, kPi}),
                      rng.uniform(), rng.uniform_int(0, 2)});
    }
    const auto start = Clock::now();
    const std::vector<Detection> kept = rotated_nms(dets, 0.3, true);
    const double elapsed = std::chrono::duration<double>(Clock::now() - start).count();
    std::printf("nms: n=%ld in %.3fs -> %.0f boxes/s (kept %zu, seed %llu)\n", args.n, elapsed,
                args.n / std::max(elapsed, 1e-9), kept.size(),
                static_cast<unsigned long long>(seed));
    if (args.verify) {
      const std::vector<Detection> want = reference::brute_force_nms(dets, 0.3, true);
      std::printf("verify: oracle keeps %zu\n", want.size());
      if (want.size() != kept.size()) return kExitCheckFailed;
      for (std::size_t i = 0; i < kept.size(); ++i) {
        if (kept[i].score != want[i].score || kept[i].box.cx != want[i].box.cx) {
          return kExitCheckFailed;
        }
      }
    }
    return kExitOk;
  }

  throw validation_error("unknown kernel '" + args.kernel + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rotated-detection numerical toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 0;
  app.add_option("--config", config_path, "JSON config file (flags override it)");
  app.add_option("--seed", seed, "seed for randomized commands")->capture_default_str();

  TileArgs tile_args;
  CLI::App* tile = app.add_subcommand("tile", "plan DOTA crops and clip annotations");
  tile->add_option("--annos", tile_args.annos_dir, "directory of per-image DOTA .txt files")
      ->required();
  tile->add_option("--out", tile_args.out_dir, "output directory")->required();
  tile->add_option("--images", tile_args.images_dir, "directory of .png/.jpg images");
  tile->add_option("--sizes", tile_args.sizes_file, "manifest of 'image_id width height' lines");
  tile->add_option("--preset", tile_args.preset, "tiling preset")
      ->check(CLI::IsMember({"dota-ss", "dota-ms"}));
  tile->add_option("--patch", tile_args.patch, "patch size (px)");
  tile->add_option("--overlap", tile_args.overlap, "patch overlap (px)");
  tile->add_option("--scales", tile_args.scales, "rescale factors");
  tile->add_option("--keep-frac", tile_args.keep_frac,
                   "minimum kept fraction of an annotation's area");

  EvalArgs eval_args;
  CLI::App* eval = app.add_subcommand("eval", "rotated VOC-style mAP evaluation");
  eval->add_option("--gt", eval_args.gt_dir, "directory of per-image DOTA .txt files")->required();
  eval->add_option("--dets", eval_args.det_dir, "directory of per-class Task1_*.txt files")
      ->required();
  eval->add_option("--iou", eval_args.iou, "SkewIoU matching threshold");
  eval->add_option("--report", eval_args.report_path, "write 'class=AP' key-value report here");

  NmsArgs nms_args;
  CLI::App* nms = app.add_subcommand("nms", "rotated NMS over a detection file");
  nms->add_option("--dets", nms_args.dets_file, "task-1 format detections")->required();
  nms->add_option("--out", nms_args.out_file, "output file")->required();
  nms->add_option("--iou", nms_args.iou, "suppression IoU threshold");
  nms->add_option("--manifest", nms_args.manifest_file,
                  "tile manifest: detections are per tile and get merged per source image");

  std::string only_check, fault_name;
  CLI::App* selfcheck_cmd = app.add_subcommand("selfcheck", "run the numerical check suite");
  selfcheck_cmd->add_option("--only", only_check, "run a single named check");
  selfcheck_cmd->add_option("--inject-fault", fault_name,
                            "deliberately break a check to prove the harness catches it");

  BenchArgs bench_args;
  CLI::App* bench = app.add_subcommand("bench", "kernel throughput");
  bench->add_option("--kernel", bench_args.kernel, "skew_iou | probiou | nms")->required();
  bench->add_option("--n", bench_args.n, "instance count")->capture_default_str();
  bench->add_flag("--verify", bench_args.verify, "compare against the oracle afterwards");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitData;
  }

  try {
    Config config;
    if (!config_path.empty()) {
      if (!fs::exists(config_path)) {
        std::cerr << "error: cannot read " << config_path << "\n";
        return kExitIo;
      }
      config = load_config(config_path);
    }
    if (tile->parsed()) return run_tile(config, tile_args);
    if (eval->parsed()) return run_eval(config, eval_args);
    if (nms->parsed()) return run_nms(config, nms_args);
    if (selfcheck_cmd->parsed()) return run_selfcheck_cmd(seed, only_check, fault_name);
    if (bench->parsed()) return run_bench(bench_args, seed);
  } catch (const io_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const validation_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitOk;
}
