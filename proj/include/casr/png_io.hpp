#pragma once

#include <filesystem>

#include "casr/image.hpp"

namespace casr {

/// Reads 8- or 16-bit grayscale / RGB PNG files. Palette images are
/// expanded to RGB and alpha is dropped.
ImageBuffer load_png(const std::filesystem::path& path);

/// Writes a grayscale or RGB PNG. 16-bit stores round(v * 65535).
void save_png(const std::filesystem::path& path, const ImageBuffer& img, int bit_depth = 16);

/// 16-bit grayscale PNG of integer values (label maps); values must fit in 16 bits.
void save_png_u16(const std::filesystem::path& path, int width, int height, std::span<const int> values);

}  // namespace casr
