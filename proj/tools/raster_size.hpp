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

// Image dimensions from PNG/JPEG headers, without decoding any pixels.
// Pixel I/O stays out of the core library; the CLI only needs sizes to
// plan tiles.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <vector>

namespace rotdet::tools {

struct ImageSize {
  long width = 0;
  long height = 0;
};

namespace detail {

inline std::uint32_t be32(const unsigned char* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) | (std::uint32_t(p[2]) << 8) |
         std::uint32_t(p[3]);
}

inline std::uint16_t be16(const unsigned char* p) {
  return static_cast<std::uint16_t>((p[0] << 8) | p[1]);
}

}  // namespace detail

/// PNG: signature, then the IHDR chunk carries width/height at offsets 16/20.
inline std::optional<ImageSize> png_size(const std::vector<unsigned char>& head) {
  static const unsigned char magic[8] = {0x89, 0x50, 0x4E, 0x47, 0x0D, 0x0A, 0x1A, 0x0A};
  if (head.size() < 24) return std::nullopt;
  for (int i = 0; i < 8; ++i) {
    if (head[static_cast<std::size_t>(i)] != magic[i]) return std::nullopt;
  }
  if (head[12] != 'I' || head[13] != 'H' || head[14] != 'D' || head[15] != 'R') {
    return std::nullopt;
  }
  return ImageSize{static_cast<long>(detail::be32(&head[16])),
                   static_cast<long>(detail::be32(&head[20]))};
}

/// JPEG: walk the segment list until a start-of-frame marker.
inline std::optional<ImageSize> jpeg_size(const std::vector<unsigned char>& data) {
  if (data.size() < 4 || data[0] != 0xFF || data[1] != 0xD8) return std::nullopt;
  std::size_t pos = 2;
  while (pos + 3 < data.size()) {
    if (data[pos] != 0xFF) return std::nullopt;
    const unsigned char marker = data[pos + 1];
    if (marker == 0xFF) {  // fill byte
      ++pos;
      continue;
    }
    if (marker == 0xD8 || (marker >= 0xD0 && marker <= 0xD7)) {  // no payload
      pos += 2;
      continue;
    }
    if (pos + 3 >= data.size()) return std::nullopt;
    const std::uint16_t length = detail::be16(&data[pos + 2]);
    const bool is_sof = marker >= 0xC0 && marker <= 0xCF && marker != 0xC4 && marker != 0xC8 &&
                        marker != 0xCC;
    if (is_sof) {
      if (pos + 9 >= data.size()) return std::nullopt;
      return ImageSize{static_cast<long>(detail::be16(&data[pos + 7])),
                       static_cast<long>(detail::be16(&data[pos + 5]))};
    }
    pos += 2 + length;
  }
  return std::nullopt;
}

/// Reads just enough of the file to determine PNG or JPEG dimensions.
inline std::optional<ImageSize> read_image_size(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::vector<unsigned char> head(1 << 16);
  in.read(reinterpret_cast<char*>(head.data()), static_cast<std::streamsize>(head.size()));
  head.resize(static_cast<std::size_t>(in.gcount()));
  if (auto png = png_size(head)) return png;
  return jpeg_size(head);
}

}  // namespace rotdet::tools
