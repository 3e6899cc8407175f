#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ca::data {

// 8-bit grayscale raster, row-major.
struct PgmImage {
  int width = 0, height = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(int y, int x) const {
    return pixels[static_cast<std::size_t>(y) * width + x];
  }
  std::uint8_t& at(int y, int x) {
    return pixels[static_cast<std::size_t>(y) * width + x];
  }
};

// Binary PGM (P5), maxval 255 only. Headers may carry '#' comments.
PgmImage read_pgm(const std::string& path);
void write_pgm(const std::string& path, const PgmImage& img);

}  // namespace ca::data
