#pragma once

#include <filesystem>

#include "lsvt/image.hpp"

namespace lsvt {

// Reads 8-bit PNG (grayscale or RGB; alpha and palettes are flattened) or binary PPM (P6,
// maxval <= 255). Other formats raise FormatError naming the leading magic bytes.
RawImage decode_image(const std::filesystem::path& path);

// 8-bit PNG, 1 (gray) or 3 (RGB) channels.
void write_png(const std::filesystem::path& path, const RawImage& image);
// Binary P6 PPM; requires 3 channels.
void write_ppm(const std::filesystem::path& path, const RawImage& image);

}  // namespace lsvt
