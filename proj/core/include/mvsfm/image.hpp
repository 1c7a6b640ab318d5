#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "mvsfm/error.hpp"

namespace mvsfm {

// 8-bit luma raster. RGB inputs are converted with BT.601 weights on load.
struct LumaImage {
  uint32_t width = 0;
  uint32_t height = 0;
  std::vector<uint8_t> pixels;  // row-major

  uint8_t at(uint32_t x, uint32_t y) const {
    return pixels[static_cast<size_t>(y) * width + x];
  }
  uint8_t& at(uint32_t x, uint32_t y) {
    return pixels[static_cast<size_t>(y) * width + x];
  }

  static LumaImage filled(uint32_t w, uint32_t h, uint8_t value) {
    return {w, h, std::vector<uint8_t>(static_cast<size_t>(w) * h, value)};
  }
};

uint8_t bt601_luma(uint8_t r, uint8_t g, uint8_t b);

// Reads PNG (gray/rgb/rgba, 8 or 16 bit) or binary PGM, sniffed by magic.
LumaImage load_luma_image(const std::filesystem::path& path);

void save_pgm(const LumaImage& image, const std::filesystem::path& path);

}  // namespace mvsfm
