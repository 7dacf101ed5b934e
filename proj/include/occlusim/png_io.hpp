#pragma once

#include <filesystem>

#include "occlusim/image.hpp"

namespace occlusim {

/// Decodes any 8/16-bit PNG into a 3-channel image in [0, 1]. Grey inputs are
/// replicated, alpha is dropped. Throws Error naming the file on failure.
Image read_png_rgb(const std::filesystem::path& path);

/// Decodes a greyscale PNG (8 or 16 bit) into a map in [0, 1].
Map2D read_png_gray(const std::filesystem::path& path);

/// Writes 8-bit RGB (1-channel images are written as grey). Values are
/// clamped to [0, 1] and rounded to the nearest code.
void write_png_rgb8(const std::filesystem::path& path, const Image& image);

/// Writes a 16-bit greyscale PNG; values clamped to [0, 1].
void write_png_gray16(const std::filesystem::path& path, const Map2D& map);

uint8_t to_byte(float v);
uint16_t to_word(float v);

}  // namespace occlusim
