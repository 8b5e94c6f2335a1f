#include "lsvt/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "lsvt/errors.hpp"
#include "lsvt/image_io.hpp"
#include "lsvt/rng.hpp"

namespace lsvt {

namespace {

struct Point {
  double y, x;
};

// Distance from p to the segment a-b.
double segment_distance(Point p, Point a, Point b) {
  const double vy = b.y - a.y, vx = b.x - a.x;
  const double len2 = vy * vy + vx * vx;
  double t = len2 > 0 ? ((p.y - a.y) * vy + (p.x - a.x) * vx) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dy = p.y - (a.y + t * vy), dx = p.x - (a.x + t * vx);
  return std::sqrt(dy * dy + dx * dx);
}

}  // namespace

std::vector<ClassParams> default_class_params(std::size_t classes) {
  // Classes differ in the radius of the optic-disc ring; spots and vessels are shared.
  std::vector<ClassParams> out;
  for (std::size_t k = 0; k < classes; ++k) {
    const double t = classes > 1 ? static_cast<double>(k) / static_cast<double>(classes - 1) : 0.0;
    out.push_back({8, 0.3, 0.10 + 0.12 * t, 3});
  }
  return out;
}

std::vector<ClassParams> SyntheticSpec::resolved_params() const {
  return params.empty() ? default_class_params(classes) : params;
}

void SyntheticSpec::validate() const {
  if (image_size < 8) throw ConfigError("synthetic image_size must be >= 8");
  if (classes < 2) throw ConfigError("synthetic data needs at least 2 classes");
  if (!(noise >= 0.0 && noise <= 1.0)) throw ConfigError("synthetic noise must lie in [0, 1]");
  const auto p = resolved_params();
  if (p.size() != classes) throw ConfigError("synthetic params must list one entry per class");
  for (std::size_t a = 0; a < p.size(); ++a)
    for (std::size_t b = a + 1; b < p.size(); ++b)
      if (p[a] == p[b]) throw ConfigError("synthetic classes " + std::to_string(a) + " and " + std::to_string(b) + " share parameters");
  if (n_train + n_val + n_test == 0) throw ConfigError("synthetic spec requests no images");
}

RawImage render_synthetic(const SyntheticSpec& spec, int label, std::uint64_t index) {
  const auto params = spec.resolved_params();
  const auto& cp = params.at(static_cast<std::size_t>(label));
  const double n = static_cast<double>(spec.image_size);
  const double noise = spec.noise;
  // The class layout is shared by all images of a class; the per-image stream only perturbs it.
  Rng layout(derive_seed(spec.seed, 0x6c61796f7574ULL, static_cast<std::uint64_t>(label)));
  Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(label) + 1, index));

  const Point centre{n / 2, n / 2};
  const double fundus_r = 0.46 * n;

  // The disc wanders far more than the other structures, which keeps single pixels uninformative.
  const double dj = noise * 0.7 * fundus_r;
  const Point disc{centre.y - 0.05 * n + dj * (2 * uniform01(rng) - 1), centre.x + 0.22 * n + dj * (2 * uniform01(rng) - 1)};
  const double ring_r = cp.ring_radius * n;
  std::vector<std::pair<Point, Point>> vessels;
  for (std::size_t v = 0; v < cp.line_density; ++v) {
    const double base_angle = 2 * std::numbers::pi * uniform01(layout);
    const double angle = base_angle + noise * std::numbers::pi * (2 * uniform01(rng) - 1);
    const Point end{disc.y + 0.8 * fundus_r * std::sin(angle), disc.x + 0.8 * fundus_r * std::cos(angle)};
    vessels.emplace_back(disc, end);
  }
  // Spot positions blend the class layout with a fresh uniform draw in proportion to noise.
  const auto in_fundus = [&](Rng& r) {
    const double rad = 0.85 * fundus_r * std::sqrt(uniform01(r));
    const double a = 2 * std::numbers::pi * uniform01(r);
    return Point{centre.y + rad * std::sin(a), centre.x + rad * std::cos(a)};
  };
  std::vector<Point> blobs;
  for (std::size_t b = 0; b < cp.blob_count; ++b) {
    const Point base = in_fundus(layout);
    const Point fresh = in_fundus(rng);
    blobs.push_back({base.y + noise * (fresh.y - base.y), base.x + noise * (fresh.x - base.x)});
  }
  const double brightness = 1.0 + noise * 0.1 * (2 * uniform01(rng) - 1);
  const double pixel_sigma = noise * 0.05;

  RawImage out{spec.image_size, spec.image_size, 3, std::vector<std::uint8_t>(spec.image_size * spec.image_size * 3)};
  for (std::size_t y = 0; y < spec.image_size; ++y) {
    for (std::size_t x = 0; x < spec.image_size; ++x) {
      const Point p{y + 0.5, x + 0.5};
      const double dr = std::hypot(p.y - centre.y, p.x - centre.x) / fundus_r;
      double rgb[3] = {0.0, 0.0, 0.0};
      if (dr <= 1.0) {
        const double shade = 1.0 - 0.35 * dr * dr;
        rgb[0] = 0.72 * shade;
        rgb[1] = 0.34 * shade;
        rgb[2] = 0.14 * shade;
        const double dd = std::hypot(p.y - disc.y, p.x - disc.x);
        if (dd < ring_r) {
          rgb[0] += 0.20;
          rgb[1] += 0.25;
          rgb[2] += 0.15;
        } else if (dd < ring_r + 1.2) {
          rgb[1] += 0.12;
        }
        for (const auto& [a, b] : vessels) {
          if (segment_distance(p, a, b) < 0.8 && dd >= ring_r) {
            rgb[0] *= 0.55;
            rgb[1] *= 0.45;
            rgb[2] *= 0.45;
          }
        }
        for (const auto& c : blobs) {
          const double d2 = (p.y - c.y) * (p.y - c.y) + (p.x - c.x) * (p.x - c.x);
          const double w = cp.blob_intensity * std::exp(-d2 / (2 * 0.9 * 0.9));
          rgb[0] += w;
          rgb[1] += w * 0.9;
          rgb[2] += w * 0.3;
        }
        for (double& v : rgb) v *= brightness;
      }
      for (std::size_t c = 0; c < 3; ++c) {
        // Noise is drawn for every pixel so the stream layout does not depend on the content.
        const double e = pixel_sigma > 0 ? pixel_sigma * standard_normal(rng) : 0.0;
        const double v = std::clamp(rgb[c] + (dr <= 1.0 ? e : 0.0), 0.0, 1.0);
        out.pixels[(y * spec.image_size + x) * 3 + c] = static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
    }
  }
  return out;
}

Manifest generate_synthetic(const SyntheticSpec& spec, const std::filesystem::path& out_dir) {
  spec.validate();
  std::filesystem::create_directories(out_dir / "images");
  Manifest m;
  m.base_dir = out_dir;
  m.class_counts[spec.dataset] = static_cast<int>(spec.classes);
  std::uint64_t global_index = 0;
  const auto emit = [&](const char* split, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i, ++global_index) {
      const int label = static_cast<int>(i % spec.classes);
      char name[64];
      std::snprintf(name, sizeof(name), "images/%s_%04zu.png", split, i);
      write_png(out_dir / name, render_synthetic(spec, label, global_index));
      m.records.push_back({name, label, spec.dataset, split});
    }
  };
  emit("train", spec.n_train);
  emit("val", spec.n_val);
  emit("test", spec.n_test);
  validate_manifest(m);
  save_manifest(m, out_dir / "manifest.csv");
  return m;
}

}  // namespace lsvt
