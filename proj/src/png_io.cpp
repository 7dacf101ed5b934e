#include "occlusim/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

namespace occlusim {

namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

[[noreturn]] void png_error_handler(png_structp png, png_const_charp msg) {
  auto* text = static_cast<std::string*>(png_get_error_ptr(png));
  if (text) *text = msg;
  png_longjmp(png, 1);
}

void png_warning_handler(png_structp, png_const_charp) {}

struct Decoded {
  int width = 0;
  int height = 0;
  int channels = 0;  // after transforms: 1 (grey) or 3 (rgb)
  int bit_depth = 8;
  std::vector<uint8_t> bytes;  // row-major interleaved, 16-bit samples big-endian
};

Decoded decode(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.string().c_str(), "rb"));
  if (!fp) throw Error("cannot open PNG " + path.string());
  uint8_t sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw Error("not a PNG file: " + path.string());
  }

  std::string message;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &message, png_error_handler, png_warning_handler);
  if (!png) throw Error("libpng init failed for " + path.string());
  png_infop info = png_create_info_struct(png);
  Decoded out;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error("corrupt PNG " + path.string() + ": " + message);
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  out.bit_depth = png_get_bit_depth(png, info);
  out.channels = png_get_channels(png, info);
  const size_t stride = png_get_rowbytes(png, info);
  out.bytes.resize(stride * out.height);
  rows.resize(out.height);
  for (int y = 0; y < out.height; ++y) rows[y] = out.bytes.data() + stride * y;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  if (out.channels != 1 && out.channels != 3) throw Error("unsupported PNG channel layout in " + path.string());
  return out;
}

float sample(const Decoded& d, size_t index) {
  if (d.bit_depth == 16) {
    const uint16_t v = static_cast<uint16_t>(d.bytes[2 * index] << 8 | d.bytes[2 * index + 1]);
    return v / 65535.0f;
  }
  return d.bytes[index] / 255.0f;
}

void encode(const std::filesystem::path& path, int width, int height, int color_type, int depth,
            const std::vector<uint8_t>& bytes) {
  FilePtr fp(std::fopen(path.string().c_str(), "wb"));
  if (!fp) throw Error("cannot write PNG " + path.string());
  std::string message;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &message, png_error_handler, png_warning_handler);
  if (!png) throw Error("libpng init failed for " + path.string());
  png_infop info = png_create_info_struct(png);
  std::vector<png_bytep> rows(height);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("failed to encode PNG " + path.string() + ": " + message);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, width, height, depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const int channels = color_type == PNG_COLOR_TYPE_RGB ? 3 : 1;
  const size_t stride = static_cast<size_t>(width) * channels * (depth / 8);
  for (int y = 0; y < height; ++y) rows[y] = const_cast<uint8_t*>(bytes.data()) + stride * y;
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

uint8_t to_byte(float v) { return static_cast<uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)); }

uint16_t to_word(float v) { return static_cast<uint16_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 65535.0f)); }

Image read_png_rgb(const std::filesystem::path& path) {
  const Decoded d = decode(path);
  Image img(3, d.height, d.width);
  for (int y = 0; y < d.height; ++y) {
    for (int x = 0; x < d.width; ++x) {
      const size_t base = (static_cast<size_t>(y) * d.width + x) * d.channels;
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = sample(d, base + (d.channels == 3 ? c : 0));
    }
  }
  return img;
}

Map2D read_png_gray(const std::filesystem::path& path) {
  const Decoded d = decode(path);
  if (d.channels != 1) throw Error("expected a greyscale PNG: " + path.string());
  Map2D m(d.height, d.width);
  for (size_t i = 0; i < m.values.size(); ++i) m.values[i] = sample(d, i);
  return m;
}

void write_png_rgb8(const std::filesystem::path& path, const Image& image) {
  if (image.channels != 1 && image.channels != 3) throw Error("write_png_rgb8: expected 1 or 3 channels");
  std::vector<uint8_t> bytes(image.size());
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < image.channels; ++c) {
        bytes[(static_cast<size_t>(y) * image.width + x) * image.channels + c] = to_byte(image.at(c, y, x));
      }
    }
  }
  encode(path, image.width, image.height, image.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, 8, bytes);
}

void write_png_gray16(const std::filesystem::path& path, const Map2D& map) {
  std::vector<uint8_t> bytes(map.values.size() * 2);
  for (size_t i = 0; i < map.values.size(); ++i) {
    const uint16_t w = to_word(map.values[i]);
    bytes[2 * i] = static_cast<uint8_t>(w >> 8);
    bytes[2 * i + 1] = static_cast<uint8_t>(w & 0xff);
  }
  encode(path, map.width, map.height, PNG_COLOR_TYPE_GRAY, 16, bytes);
}

}  // namespace occlusim
