#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "lsvt/image.hpp"
#include "lsvt/rng.hpp"

namespace lsvt {

enum class ViewKind { global, local };

struct ViewSpec {
  ViewKind kind = ViewKind::global;
  std::size_t count = 2;
  double scale_lo = 0.4;  // fraction of the source area
  double scale_hi = 1.0;
  std::size_t size = 32;

  static ViewSpec global_default() { return {ViewKind::global, 2, 0.4, 1.0, 32}; }
  static ViewSpec local_default() { return {ViewKind::local, 8, 0.05, 0.4, 16}; }
};

struct PhotometricConfig {
  double p_flip = 0.5;
  double p_gray = 0.2;
  // Off by default: brightness/contrast jitter and a 3×3 box blur, for experiments only.
  bool extra = false;
  double jitter = 0.4;
  double p_blur = 0.5;
};

struct CropWindow {
  std::size_t y0 = 0, x0 = 0, side = 0;
};

struct CropSet {
  std::vector<Image> globals;
  std::vector<Image> locals;
  std::vector<CropWindow> global_windows;
  std::vector<CropWindow> local_windows;
  std::size_t source_id = 0;
  std::uint64_t seed = 0;
};

// Rejects lo <= 0, lo > hi, hi > 1, zero counts/sizes, local size above global size, and
// probabilities outside [0, 1].
void validate_views(const ViewSpec& global, const ViewSpec& local, const PhotometricConfig& photo);

// Per-channel statistics over standardized-size training images.
struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};

ChannelStats compute_channel_stats(const std::vector<Image>& images);

// Resize-then-centre-crop to base×base, then (v - mean_c)/std_c. A zero std falls back to a
// unit divisor with a warning.
Image standardize_image(const RawImage& raw, std::size_t base, const ChannelStats& stats);
Image standardize_image(const Image& image, std::size_t base, const ChannelStats& stats);

// Draw order per call: flip then gray (both always drawn), then with `extra`: brightness,
// contrast, blur.
Image apply_photometric(const Image& view, Rng& rng, const PhotometricConfig& photo);

// Mirror left-right.
Image flip_horizontal(const Image& image);
// Every channel replaced by 0.299·R + 0.587·G + 0.114·B. Single-channel input is returned as-is.
Image to_grayscale(const Image& image);

// Globals first, then locals. Per view: area fraction s ~ U(lo, hi), square side
// round(sqrt(s)·min(H, W)), top-left uniform over valid positions, bilinear resize to the spec
// size, then photometric transforms. ConfigError when the smallest crop is below one pixel.
CropSet make_views(const Image& image, const ViewSpec& global, const ViewSpec& local,
                   const PhotometricConfig& photo, std::uint64_t seed, std::size_t source_id = 0);

}  // namespace lsvt
