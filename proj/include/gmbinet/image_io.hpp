// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace gmbinet {

/// 8-bit interleaved raster.
struct Image8 {
  int64_t width = 0;
  int64_t height = 0;
  int channels = 1;  ///< 1 (gray) or 3 (RGB)
  std::vector<uint8_t> pixels;
};

/// Reads any PNG as 8-bit gray or RGB (palette, 16-bit and alpha are converted).
Image8 read_png(const std::filesystem::path& path);
void write_png(const Image8& image, const std::filesystem::path& path);

}  // namespace gmbinet
