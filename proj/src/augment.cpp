#include "lsvt/augment.hpp"

#include <algorithm>
#include <cmath>

#include "lsvt/errors.hpp"

namespace lsvt {

namespace {

void check_spec(const ViewSpec& s, const char* what) {
  if (!(s.scale_lo > 0.0) || s.scale_lo > s.scale_hi || s.scale_hi > 1.0) {
    throw ConfigError(std::string(what) + " scale range must satisfy 0 < lo <= hi <= 1, got (" +
                      std::to_string(s.scale_lo) + ", " + std::to_string(s.scale_hi) + ")");
  }
  if (s.count == 0) throw ConfigError(std::string(what) + " view count must be >= 1");
  if (s.size == 0) throw ConfigError(std::string(what) + " view size must be >= 1");
}

void check_probability(double p, const char* what) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string(what) + " must lie in [0, 1]");
}

Image box_blur(const Image& src) {
  Image out(src.height, src.width, src.channels);
  for (std::size_t y = 0; y < src.height; ++y)
    for (std::size_t x = 0; x < src.width; ++x)
      for (std::size_t c = 0; c < src.channels; ++c) {
        double acc = 0.0;
        int n = 0;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const long yy = static_cast<long>(y) + dy, xx = static_cast<long>(x) + dx;
            if (yy < 0 || xx < 0 || yy >= static_cast<long>(src.height) || xx >= static_cast<long>(src.width)) continue;
            acc += src.at(yy, xx, c);
            ++n;
          }
        out.at(y, x, c) = static_cast<float>(acc / n);
      }
  return out;
}

}  // namespace

void validate_views(const ViewSpec& global, const ViewSpec& local, const PhotometricConfig& photo) {
  check_spec(global, "global");
  check_spec(local, "local");
  if (global.size < local.size) throw ConfigError("global view size must be >= local view size");
  check_probability(photo.p_flip, "p_flip");
  check_probability(photo.p_gray, "p_gray");
  check_probability(photo.p_blur, "p_blur");
  if (!(photo.jitter >= 0.0 && photo.jitter < 1.0)) throw ConfigError("jitter must lie in [0, 1)");
}

ChannelStats compute_channel_stats(const std::vector<Image>& images) {
  if (images.empty()) throw ContractError("channel statistics need at least one image");
  const auto c = images.front().channels;
  std::vector<double> sum(c, 0.0), sq(c, 0.0);
  double count = 0.0;
  for (const auto& im : images) {
    if (im.channels != c) throw ShapeError("channel statistics: mixed channel counts");
    for (std::size_t i = 0; i < im.pixels.size(); ++i) {
      const double v = im.pixels[i];
      sum[i % c] += v;
      sq[i % c] += v * v;
    }
    count += static_cast<double>(im.height * im.width);
  }
  ChannelStats stats{std::vector<double>(c), std::vector<double>(c)};
  for (std::size_t k = 0; k < c; ++k) {
    stats.mean[k] = sum[k] / count;
    stats.stddev[k] = std::sqrt(std::max(0.0, sq[k] / count - stats.mean[k] * stats.mean[k]));
  }
  return stats;
}

Image standardize_image(const Image& image, std::size_t base, const ChannelStats& stats) {
  if (image.pixels.empty()) throw ShapeError("standardize_image: empty image");
  if (stats.mean.size() != image.channels || stats.stddev.size() != image.channels) {
    throw ShapeError("standardize_image: statistics for " + std::to_string(stats.mean.size()) +
                     " channels, image has " + std::to_string(image.channels));
  }
  Image out = resize_center_crop(image, base);
  for (std::size_t c = 0; c < out.channels; ++c) {
    double div = stats.stddev[c];
    if (!(div > 1e-12)) {
      warn("channel " + std::to_string(c) + " has zero variance; using unit divisor");
      div = 1.0;
    }
    for (std::size_t i = c; i < out.pixels.size(); i += out.channels) {
      out.pixels[i] = static_cast<float>((out.pixels[i] - stats.mean[c]) / div);
    }
  }
  return out;
}

Image standardize_image(const RawImage& raw, std::size_t base, const ChannelStats& stats) {
  if (raw.pixels.empty()) throw ShapeError("standardize_image: empty image");
  return standardize_image(to_float(raw), base, stats);
}

Image flip_horizontal(const Image& image) {
  Image out(image.height, image.width, image.channels);
  for (std::size_t y = 0; y < image.height; ++y)
    for (std::size_t x = 0; x < image.width; ++x)
      for (std::size_t c = 0; c < image.channels; ++c) out.at(y, image.width - 1 - x, c) = image.at(y, x, c);
  return out;
}

Image to_grayscale(const Image& image) {
  if (image.channels == 1) return image;
  if (image.channels != 3) throw ShapeError("grayscale needs 1 or 3 channels");
  Image out(image.height, image.width, 3);
  for (std::size_t y = 0; y < image.height; ++y)
    for (std::size_t x = 0; x < image.width; ++x) {
      const double lum = 0.299 * image.at(y, x, 0) + 0.587 * image.at(y, x, 1) + 0.114 * image.at(y, x, 2);
      // For gray input lum is within a few double ulps of the float value, so the cast is exact.
      const float v = static_cast<float>(lum);
      for (std::size_t c = 0; c < 3; ++c) out.at(y, x, c) = v;
    }
  return out;
}

Image apply_photometric(const Image& view, Rng& rng, const PhotometricConfig& photo) {
  const bool do_flip = uniform01(rng) < photo.p_flip;
  const bool do_gray = uniform01(rng) < photo.p_gray;
  Image out = do_flip ? flip_horizontal(view) : view;
  if (do_gray) out = to_grayscale(out);
  if (photo.extra) {
    const double brightness = uniform(rng, -photo.jitter, photo.jitter);
    const double contrast = uniform(rng, 1.0 - photo.jitter, 1.0 + photo.jitter);
    const bool do_blur = uniform01(rng) < photo.p_blur;
    double m = 0.0;
    for (float v : out.pixels) m += v;
    m /= static_cast<double>(out.pixels.size());
    for (float& v : out.pixels) v = static_cast<float>((v - m) * contrast + m + brightness);
    if (do_blur) out = box_blur(out);
  }
  return out;
}

CropSet make_views(const Image& image, const ViewSpec& global, const ViewSpec& local,
                   const PhotometricConfig& photo, std::uint64_t seed, std::size_t source_id) {
  validate_views(global, local, photo);
  if (image.pixels.empty()) throw ShapeError("make_views: empty image");
  const std::size_t short_side = std::min(image.height, image.width);
  for (const auto* spec : {&global, &local}) {
    if (std::sqrt(spec->scale_lo) * static_cast<double>(short_side) < 1.0) {
      throw ConfigError("scale lower bound " + std::to_string(spec->scale_lo) + " gives sub-pixel crops on a " +
                        std::to_string(image.height) + "x" + std::to_string(image.width) + " image");
    }
  }
  CropSet set;
  set.source_id = source_id;
  set.seed = seed;
  Rng rng(seed);
  const auto one_view = [&](const ViewSpec& spec, std::vector<Image>& views, std::vector<CropWindow>& windows) {
    const double s = uniform(rng, spec.scale_lo, spec.scale_hi);
    auto side = static_cast<std::size_t>(std::lround(std::sqrt(s) * static_cast<double>(short_side)));
    side = std::clamp<std::size_t>(side, 1, short_side);
    const std::size_t y0 = uniform_index(rng, image.height - side + 1);
    const std::size_t x0 = uniform_index(rng, image.width - side + 1);
    Image v = resize_bilinear(crop(image, y0, x0, side, side), spec.size, spec.size);
    views.push_back(apply_photometric(v, rng, photo));
    windows.push_back({y0, x0, side});
  };
  for (std::size_t i = 0; i < global.count; ++i) one_view(global, set.globals, set.global_windows);
  for (std::size_t i = 0; i < local.count; ++i) one_view(local, set.locals, set.local_windows);
  return set;
}

}  // namespace lsvt
