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

// End-to-end tests driving the installed CLI binary.

#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunResult run_cli(const std::string& args, const fs::path& dir) {
  const fs::path out = dir / "stdout.txt";
  const fs::path err = dir / "stderr.txt";
  const std::string cmd = std::string(ROTDET_CLI_PATH) + " " + args + " > " + out.string() +
                          " 2> " + err.string();
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

fs::path fresh_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("rotdet_cli_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out << text;
}

int count_manifest_tiles(const fs::path& manifest) {
  std::ifstream in(manifest);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] != '#') ++n;
  }
  return n;
}

}  // namespace

TEST_CASE("tile: 4000x4000 with preset dota-ss yields 25 tiles") {
  const fs::path dir = fresh_dir("tile_ss");
  write_file(dir / "annos" / "P0001.txt",
             "imagesource:GoogleEarth\n"
             "100 100 160 100 160 130 100 130 plane 0\n"
             "3000 3000 3100 3000 3100 3080 3000 3080 ship 0\n");
  write_file(dir / "sizes.txt", "P0001 4000 4000\n");
  const RunResult r = run_cli("tile --annos " + (dir / "annos").string() + " --out " +
                                  (dir / "out").string() + " --sizes " +
                                  (dir / "sizes.txt").string() + " --preset dota-ss",
                              dir);
  CAPTURE(r.err);
  CHECK(r.exit_code == 0);
  CHECK(count_manifest_tiles(dir / "out" / "manifest.txt") == 25);
  CHECK(r.out.find("P0001: 25 tiles") != std::string::npos);
  // The annotation near (100,100) lands fully inside the first tile.
  const std::string first_tile = slurp(dir / "out" / "annotations" / "P0001__1__0___0.txt");
  CHECK(first_tile.find("plane 0") != std::string::npos);
  CHECK(first_tile.find("ship") == std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("tile: single-tile image") {
  const fs::path dir = fresh_dir("tile_single");
  write_file(dir / "annos" / "P0002.txt", "10 10 60 10 60 40 10 40 harbor 0\n");
  write_file(dir / "sizes.txt", "P0002 1024 1024\n");
  const RunResult r = run_cli("tile --annos " + (dir / "annos").string() + " --out " +
                                  (dir / "out").string() + " --sizes " +
                                  (dir / "sizes.txt").string() + " --preset dota-ss",
                              dir);
  CHECK(r.exit_code == 0);
  CHECK(count_manifest_tiles(dir / "out" / "manifest.txt") == 1);
  fs::remove_all(dir);
}

TEST_CASE("tile: missing annotation file exits 2 and names the path") {
  const fs::path dir = fresh_dir("tile_missing");
  fs::create_directories(dir / "annos");
  write_file(dir / "sizes.txt", "P0404 2048 2048\n");
  const RunResult r = run_cli("tile --annos " + (dir / "annos").string() + " --out " +
                                  (dir / "out").string() + " --sizes " +
                                  (dir / "sizes.txt").string(),
                              dir);
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("P0404.txt") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("tile: reads PNG and JPEG dimensions from image headers") {
  const fs::path dir = fresh_dir("tile_png");
  // Minimal PNG head: signature + IHDR with width 64, height 32.
  const unsigned char png[] = {0x89, 0x50, 0x4E, 0x47, 0x0D, 0x0A, 0x1A, 0x0A,
                               0x00, 0x00, 0x00, 0x0D, 'I',  'H',  'D',  'R',
                               0x00, 0x00, 0x00, 0x40, 0x00, 0x00, 0x00, 0x20,
                               0x08, 0x02, 0x00, 0x00, 0x00};
  write_file(dir / "imgs" / "P0003.png", std::string(reinterpret_cast<const char*>(png), sizeof(png)));
  // Minimal JPEG: SOI + SOF0 with height 48, width 80.
  const unsigned char jpg[] = {0xFF, 0xD8, 0xFF, 0xC0, 0x00, 0x11, 0x08,
                               0x00, 0x30, 0x00, 0x50, 0x03, 0x01, 0x22};
  write_file(dir / "imgs" / "P0004.jpg", std::string(reinterpret_cast<const char*>(jpg), sizeof(jpg)));
  write_file(dir / "annos" / "P0003.txt", "5 5 20 5 20 15 5 15 plane 0\n");
  write_file(dir / "annos" / "P0004.txt", "");
  const RunResult r = run_cli("tile --annos " + (dir / "annos").string() + " --out " +
                                  (dir / "out").string() + " --images " + (dir / "imgs").string() +
                                  " --patch 32 --overlap 8",
                              dir);
  CAPTURE(r.err);
  CHECK(r.exit_code == 0);
  // 64x32 at patch 32 stride 24 -> x offsets {0,24,32}? clamp: 0, then 24+32=56>64? 24+32 = 56 < 64 -> {0,24,32}. Height 32 -> {0}.
  CHECK(r.out.find("P0003:") != std::string::npos);
  CHECK(r.out.find("P0004:") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("eval: hand-enumerated fixture reports AP 5/6 and writes the report") {
  const fs::path dir = fresh_dir("eval_fixture");
  write_file(dir / "gt" / "img1.txt",
             "6 7 14 7 14 13 6 13 plane 0\n"
             "36 37 44 37 44 43 36 43 plane 0\n");
  write_file(dir / "dets" / "Task1_plane.txt",
             "img1 0.9000 6.00 7.00 14.00 7.00 14.00 13.00 6.00 13.00\n"
             "img1 0.8000 66.00 67.00 74.00 67.00 74.00 73.00 66.00 73.00\n"
             "img1 0.7000 36.00 37.00 44.00 37.00 44.00 43.00 36.00 43.00\n");
  const RunResult r = run_cli("eval --gt " + (dir / "gt").string() + " --dets " +
                                  (dir / "dets").string() + " --report " +
                                  (dir / "report.txt").string(),
                              dir);
  CAPTURE(r.err);
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("PL") != std::string::npos);
  CHECK(r.out.find("mAP") != std::string::npos);
  const std::string report = slurp(dir / "report.txt");
  CHECK(report.find("plane=0.833333") != std::string::npos);
  CHECK(report.find("mAP=0.833333") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("eval: perfect and empty detections") {
  const fs::path dir = fresh_dir("eval_perfect");
  write_file(dir / "gt" / "a.txt", "6 7 14 7 14 13 6 13 plane 0\n");
  write_file(dir / "dets" / "Task1_plane.txt",
             "a 0.9000 6.00 7.00 14.00 7.00 14.00 13.00 6.00 13.00\n");
  const RunResult perfect = run_cli("eval --gt " + (dir / "gt").string() + " --dets " +
                                        (dir / "dets").string() + " --report " +
                                        (dir / "r1.txt").string(),
                                    dir);
  CHECK(perfect.exit_code == 0);
  CHECK(slurp(dir / "r1.txt").find("mAP=1.000000") != std::string::npos);

  const fs::path empty_dets = dir / "empty";
  fs::create_directories(empty_dets);
  const RunResult empty = run_cli("eval --gt " + (dir / "gt").string() + " --dets " +
                                      empty_dets.string() + " --report " + (dir / "r2.txt").string(),
                                  dir);
  CHECK(empty.exit_code == 0);
  CHECK(slurp(dir / "r2.txt").find("mAP=0.000000") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("eval: vocabulary mismatch exits 3") {
  const fs::path dir = fresh_dir("eval_vocab");
  write_file(dir / "gt" / "a.txt", "6 7 14 7 14 13 6 13 plane 0\n");
  write_file(dir / "dets" / "Task1_spaceship.txt",
             "a 0.9000 6.00 7.00 14.00 7.00 14.00 13.00 6.00 13.00\n");
  const RunResult r = run_cli("eval --gt " + (dir / "gt").string() + " --dets " +
                                  (dir / "dets").string(),
                              dir);
  CHECK(r.exit_code == 3);
  CHECK(r.err.find("spaceship") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("nms: suppresses duplicates per image") {
  const fs::path dir = fresh_dir("nms_basic");
  write_file(dir / "dets.txt",
             "img1 0.9000 6.00 7.00 14.00 7.00 14.00 13.00 6.00 13.00\n"
             "img1 0.8000 6.00 7.00 14.00 7.00 14.00 13.00 6.00 13.00\n"
             "img2 0.7000 6.00 7.00 14.00 7.00 14.00 13.00 6.00 13.00\n");
  const RunResult r = run_cli("nms --dets " + (dir / "dets.txt").string() + " --out " +
                                  (dir / "kept.txt").string() + " --iou 0.5",
                              dir);
  CAPTURE(r.err);
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("kept 2 detections") != std::string::npos);
  const std::string kept = slurp(dir / "kept.txt");
  CHECK(kept.find("img1 0.9000") != std::string::npos);
  CHECK(kept.find("img1 0.8000") == std::string::npos);
  CHECK(kept.find("img2 0.7000") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("nms: merges per-tile detections through the manifest") {
  const fs::path dir = fresh_dir("nms_manifest");
  write_file(dir / "manifest.txt",
             "# tile_id image scale x0 y0 patch_size\n"
             "P0001__1__0___0 P0001 1 0 0 1024\n"
             "P0001__1__768___0 P0001 1 768 0 1024\n");
  // The same physical object at (800,100) seen from both tiles.
  write_file(dir / "dets.txt",
             "P0001__1__0___0 0.9000 785.00 94.00 815.00 94.00 815.00 106.00 785.00 106.00\n"
             "P0001__1__768___0 0.8000 17.00 94.00 47.00 94.00 47.00 106.00 17.00 106.00\n");
  const RunResult r = run_cli("nms --dets " + (dir / "dets.txt").string() + " --out " +
                                  (dir / "kept.txt").string() + " --iou 0.3 --manifest " +
                                  (dir / "manifest.txt").string(),
                              dir);
  CAPTURE(r.err);
  CHECK(r.exit_code == 0);
  const std::string kept = slurp(dir / "kept.txt");
  CHECK(kept.find("P0001 0.9000") != std::string::npos);
  CHECK(kept.find("0.8000") == std::string::npos);
  CHECK(r.out.find("kept 1 detections") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("selfcheck: single check passes, fault injection fails") {
  const fs::path dir = fresh_dir("selfcheck");
  const RunResult ok = run_cli("selfcheck --only angle-codec", dir);
  CHECK(ok.exit_code == 0);
  CHECK(ok.out.find("[PASS] angle-codec") != std::string::npos);
  CHECK(ok.out.find("max_err=") != std::string::npos);

  const RunResult fault =
      run_cli("selfcheck --only loss-gradients-fd --inject-fault probiou-grad-sign", dir);
  CHECK(fault.exit_code == 1);
  CHECK(fault.out.find("[FAIL] loss-gradients-fd") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("bench: deterministic content for a fixed seed") {
  const fs::path dir = fresh_dir("bench");
  const RunResult a = run_cli("--seed 7 bench --kernel skew_iou --n 5000", dir);
  const RunResult b = run_cli("--seed 7 bench --kernel skew_iou --n 5000", dir);
  REQUIRE(a.exit_code == 0);
  REQUIRE(b.exit_code == 0);
  const auto checksum = [](const std::string& s) {
    const std::size_t at = s.find("checksum ");
    return s.substr(at, s.find(',', at) - at);
  };
  CHECK(checksum(a.out) == checksum(b.out));

  const RunResult nms = run_cli("bench --kernel nms --n 500 --verify", dir);
  CHECK(nms.exit_code == 0);
  CHECK(nms.out.find("verify: oracle keeps") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("config: unknown keys exit 3, valid config steers commands") {
  const fs::path dir = fresh_dir("config");
  write_file(dir / "bad.json", R"({"nms": {"iou": 0.5}})");
  const RunResult bad = run_cli("--config " + (dir / "bad.json").string() +
                                    " selfcheck --only angle-codec",
                                dir);
  CHECK(bad.exit_code == 3);
  CHECK(bad.err.find("unknown config key") != std::string::npos);

  // keep_frac 1.0 drops the straddling annotation that 0.5 keeps.
  write_file(dir / "strict.json", R"({"tiling": {"keep_frac": 1.0}})");
  write_file(dir / "annos" / "P.txt", "1000 10 1040 10 1040 30 1000 30 plane 0\n");
  write_file(dir / "sizes.txt", "P 2048 1024\n");
  const RunResult strict = run_cli("--config " + (dir / "strict.json").string() + " tile --annos " +
                                       (dir / "annos").string() + " --out " +
                                       (dir / "strict_out").string() + " --sizes " +
                                       (dir / "sizes.txt").string() + " --preset dota-ss",
                                   dir);
  REQUIRE(strict.exit_code == 0);
  // The annotation straddles x = 1024 of tile (768,0): with keep_frac 1.0 it
  // survives only in the tile that contains it fully.
  const std::string t768 = slurp(dir / "strict_out" / "annotations" / "P__1__768___0.txt");
  CHECK(t768.find("plane") != std::string::npos);
  const std::string t0 = slurp(dir / "strict_out" / "annotations" / "P__1__0___0.txt");
  CHECK(t0.find("plane") == std::string::npos);

  const RunResult missing = run_cli("--config /no/such/config.json selfcheck --only angle-codec", dir);
  CHECK(missing.exit_code == 2);
  fs::remove_all(dir);
}
