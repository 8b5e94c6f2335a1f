#include "lsvt/image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lsvt/errors.hpp"

namespace lsvt {

namespace {

struct Tap {
  std::size_t lo, hi;
  double frac;
};

// Source taps for destination index i when resampling n_src -> n_dst samples.
Tap source_tap(std::size_t i, std::size_t n_src, std::size_t n_dst) {
  const double pos = (static_cast<double>(i) + 0.5) * static_cast<double>(n_src) /
                         static_cast<double>(n_dst) - 0.5;
  const double clamped = std::clamp(pos, 0.0, static_cast<double>(n_src - 1));
  const auto lo = static_cast<std::size_t>(std::floor(clamped));
  const auto hi = std::min(lo + 1, n_src - 1);
  return {lo, hi, clamped - static_cast<double>(lo)};
}

}  // namespace

Image to_float(const RawImage& raw) {
  Image out(raw.height, raw.width, raw.channels);
  for (std::size_t i = 0; i < raw.pixels.size(); ++i) out.pixels[i] = static_cast<float>(raw.pixels[i]) / 255.0f;
  return out;
}

RawImage to_raw(const Image& image) {
  RawImage out{image.height, image.width, image.channels, std::vector<std::uint8_t>(image.pixels.size())};
  for (std::size_t i = 0; i < image.pixels.size(); ++i) {
    const float v = std::clamp(image.pixels[i], 0.0f, 1.0f);
    out.pixels[i] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
  }
  return out;
}

Image resize_bilinear(const Image& src, std::size_t out_height, std::size_t out_width) {
  if (src.height == 0 || src.width == 0 || out_height == 0 || out_width == 0) {
    throw ShapeError("resize_bilinear: empty image or target");
  }
  if (src.height == out_height && src.width == out_width) return src;
  Image out(out_height, out_width, src.channels);
  for (std::size_t y = 0; y < out_height; ++y) {
    const Tap ty = source_tap(y, src.height, out_height);
    for (std::size_t x = 0; x < out_width; ++x) {
      const Tap tx = source_tap(x, src.width, out_width);
      for (std::size_t c = 0; c < src.channels; ++c) {
        const double top = src.at(ty.lo, tx.lo, c) * (1 - tx.frac) + src.at(ty.lo, tx.hi, c) * tx.frac;
        const double bottom = src.at(ty.hi, tx.lo, c) * (1 - tx.frac) + src.at(ty.hi, tx.hi, c) * tx.frac;
        out.at(y, x, c) = static_cast<float>(top * (1 - ty.frac) + bottom * ty.frac);
      }
    }
  }
  return out;
}

Image crop(const Image& src, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) {
  if (h == 0 || w == 0 || y0 + h > src.height || x0 + w > src.width) {
    throw ShapeError("crop: window " + std::to_string(h) + "x" + std::to_string(w) + " at (" +
                     std::to_string(y0) + "," + std::to_string(x0) + ") exceeds " +
                     std::to_string(src.height) + "x" + std::to_string(src.width));
  }
  Image out(h, w, src.channels);
  for (std::size_t y = 0; y < h; ++y) {
    const auto* row = &src.pixels[((y0 + y) * src.width + x0) * src.channels];
    std::copy_n(row, w * src.channels, &out.pixels[y * w * src.channels]);
  }
  return out;
}

Image resize_center_crop(const Image& src, std::size_t size) {
  if (src.height == 0 || src.width == 0) throw ShapeError("resize_center_crop: empty image");
  const std::size_t short_side = std::min(src.height, src.width);
  const auto scaled = [&](std::size_t n) {
    return std::max<std::size_t>(size, static_cast<std::size_t>(std::lround(
                                           static_cast<double>(n) * size / short_side)));
  };
  const std::size_t h = src.height == short_side ? size : scaled(src.height);
  const std::size_t w = src.width == short_side ? size : scaled(src.width);
  Image resized = resize_bilinear(src, h, w);
  return crop(resized, (h - size) / 2, (w - size) / 2, size, size);
}

std::vector<double> resize_grid(const std::vector<double>& grid, std::size_t h, std::size_t w,
                                std::size_t out_h, std::size_t out_w) {
  if (grid.size() != h * w || out_h == 0 || out_w == 0) throw ShapeError("resize_grid: bad dimensions");
  std::vector<double> out(out_h * out_w);
  for (std::size_t y = 0; y < out_h; ++y) {
    const Tap ty = source_tap(y, h, out_h);
    for (std::size_t x = 0; x < out_w; ++x) {
      const Tap tx = source_tap(x, w, out_w);
      const double top = grid[ty.lo * w + tx.lo] * (1 - tx.frac) + grid[ty.lo * w + tx.hi] * tx.frac;
      const double bottom = grid[ty.hi * w + tx.lo] * (1 - tx.frac) + grid[ty.hi * w + tx.hi] * tx.frac;
      out[y * out_w + x] = top * (1 - ty.frac) + bottom * ty.frac;
    }
  }
  return out;
}

std::vector<double> bilinear_matrix(std::size_t src_h, std::size_t src_w, std::size_t dst_h,
                                    std::size_t dst_w) {
  const std::size_t n_src = src_h * src_w;
  std::vector<double> m(dst_h * dst_w * n_src, 0.0);
  for (std::size_t y = 0; y < dst_h; ++y) {
    const Tap ty = source_tap(y, src_h, dst_h);
    for (std::size_t x = 0; x < dst_w; ++x) {
      const Tap tx = source_tap(x, src_w, dst_w);
      double* row = &m[(y * dst_w + x) * n_src];
      row[ty.lo * src_w + tx.lo] += (1 - ty.frac) * (1 - tx.frac);
      row[ty.lo * src_w + tx.hi] += (1 - ty.frac) * tx.frac;
      row[ty.hi * src_w + tx.lo] += ty.frac * (1 - tx.frac);
      row[ty.hi * src_w + tx.hi] += ty.frac * tx.frac;
    }
  }
  return m;
}

}  // namespace lsvt
