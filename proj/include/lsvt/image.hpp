#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace lsvt {

// Decoded 8-bit image. Pixels are row-major, top row first, channel-last (HWC).
struct RawImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(std::size_t y, std::size_t x, std::size_t c) const {
    return pixels[(y * width + x) * channels + c];
  }
};

// Real-valued image, same HWC layout as RawImage.
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(std::size_t h, std::size_t w, std::size_t c, float fill = 0.0f)
      : height(h), width(w), channels(c), pixels(h * w * c, fill) {}

  float& at(std::size_t y, std::size_t x, std::size_t c) { return pixels[(y * width + x) * channels + c]; }
  float at(std::size_t y, std::size_t x, std::size_t c) const {
    return pixels[(y * width + x) * channels + c];
  }
  bool operator==(const Image&) const = default;
};

// Scales 0..255 to 0..1.
Image to_float(const RawImage& raw);
// Rounds and clamps 0..1 back to 8-bit.
RawImage to_raw(const Image& image);

// Bilinear resampling with pixel-centre alignment; edges are clamped.
Image resize_bilinear(const Image& src, std::size_t out_height, std::size_t out_width);

// Window [y0, y0+h) × [x0, x0+w); throws ShapeError when it leaves the image.
Image crop(const Image& src, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w);

// Resize so the shorter side equals `size`, then take the centred size×size window.
Image resize_center_crop(const Image& src, std::size_t size);

// Bilinear resampling of a single-channel row-major grid of doubles.
std::vector<double> resize_grid(const std::vector<double>& grid, std::size_t h, std::size_t w,
                                std::size_t out_h, std::size_t out_w);

// Row-major bilinear interpolation weights mapping a src_h×src_w grid onto a dst_h×dst_w grid
// (pixel-centre alignment, clamped edges). Result is (dst_h·dst_w)×(src_h·src_w).
std::vector<double> bilinear_matrix(std::size_t src_h, std::size_t src_w, std::size_t dst_h,
                                    std::size_t dst_w);

}  // namespace lsvt
