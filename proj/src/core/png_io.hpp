// Copyright 2026 The bckd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace bckd {

// 8-bit PNG writer/reader. channels is 1 (gray) or 3 (RGB); pixels are
// interleaved, row-major.
void write_png(const std::string& path, int width, int height, int channels, const std::vector<std::uint8_t>& pixels);

struct PngImage {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;
};

PngImage read_png(const std::string& path);

}  // namespace bckd
