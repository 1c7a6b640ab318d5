#include "mvsfm/image.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>
#include <string>

#include "mvsfm/bytes.hpp"

namespace mvsfm {

uint8_t bt601_luma(uint8_t r, uint8_t g, uint8_t b) {
  double y = 0.299 * r + 0.587 * g + 0.114 * b;
  long v = std::lround(y);
  if (v < 0) v = 0;
  if (v > 255) v = 255;
  return static_cast<uint8_t>(v);
}

namespace {

LumaImage load_png(const std::filesystem::path& path) {
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.string().c_str(), "rb"),
                                           &std::fclose);
  if (!fp) fail(ErrorCode::IoError, "cannot open " + path.string());

  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorCode::IoError, "libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorCode::IoError, "png decode failed for " + path.string());
  }

  png_init_io(png, fp.get());
  png_read_info(png, info);

  png_uint_32 width = png_get_image_width(png, info);
  png_uint_32 height = png_get_image_height(png, info);
  png_byte color_type = png_get_color_type(png, info);
  png_byte bit_depth = png_get_bit_depth(png, info);

  if (bit_depth == 16) png_set_strip_16(png);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8)
    png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_read_update_info(png, info);

  size_t rowbytes = png_get_rowbytes(png, info);
  std::vector<uint8_t> raw(rowbytes * height);
  std::vector<png_bytep> rows(height);
  for (png_uint_32 y = 0; y < height; ++y) rows[y] = raw.data() + y * rowbytes;
  png_read_image(png, rows.data());

  int channels = png_get_channels(png, info);
  png_destroy_read_struct(&png, &info, nullptr);

  LumaImage image;
  image.width = width;
  image.height = height;
  image.pixels.resize(static_cast<size_t>(width) * height);
  for (png_uint_32 y = 0; y < height; ++y) {
    const uint8_t* row = raw.data() + y * rowbytes;
    for (png_uint_32 x = 0; x < width; ++x) {
      const uint8_t* px = row + static_cast<size_t>(x) * channels;
      uint8_t luma;
      switch (channels) {
        case 1: luma = px[0]; break;
        case 2: luma = px[0]; break;  // gray + alpha
        default: luma = bt601_luma(px[0], px[1], px[2]); break;
      }
      image.at(x, y) = luma;
    }
  }
  return image;
}

LumaImage load_pgm(const std::filesystem::path& path) {
  auto bytes = read_file_bytes(path);
  size_t pos = 0;
  auto next_token = [&]() -> std::string {
    while (pos < bytes.size()) {
      if (std::isspace(bytes[pos])) {
        ++pos;
      } else if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
    std::string token;
    while (pos < bytes.size() && !std::isspace(bytes[pos]))
      token.push_back(static_cast<char>(bytes[pos++]));
    return token;
  };

  std::string magic = next_token();
  if (magic != "P5") fail(ErrorCode::BadMagic, path.string() + ": expected P5 PGM");
  uint32_t width = static_cast<uint32_t>(std::stoul(next_token()));
  uint32_t height = static_cast<uint32_t>(std::stoul(next_token()));
  unsigned long maxval = std::stoul(next_token());
  if (maxval != 255)
    fail(ErrorCode::TypeError, path.string() + ": only 8-bit PGM supported");
  ++pos;  // single whitespace after maxval

  size_t need = static_cast<size_t>(width) * height;
  if (bytes.size() - pos < need)
    fail(ErrorCode::Truncated, path.string() + ": PGM pixel data truncated");
  LumaImage image;
  image.width = width;
  image.height = height;
  image.pixels.assign(bytes.begin() + static_cast<ptrdiff_t>(pos),
                      bytes.begin() + static_cast<ptrdiff_t>(pos + need));
  return image;
}

}  // namespace

LumaImage load_luma_image(const std::filesystem::path& path) {
  auto head = read_file_bytes(path);
  if (head.size() >= 8 && head[0] == 0x89 && head[1] == 'P' && head[2] == 'N' &&
      head[3] == 'G')
    return load_png(path);
  if (head.size() >= 2 && head[0] == 'P' && head[1] == '5') return load_pgm(path);
  fail(ErrorCode::BadMagic, path.string() + ": neither PNG nor binary PGM");
}

void save_pgm(const LumaImage& image, const std::filesystem::path& path) {
  std::string header = "P5\n" + std::to_string(image.width) + " " +
                       std::to_string(image.height) + "\n255\n";
  std::vector<uint8_t> bytes(header.begin(), header.end());
  bytes.insert(bytes.end(), image.pixels.begin(), image.pixels.end());
  write_file_bytes(path, bytes);
}

}  // namespace mvsfm
