#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lsvt/image.hpp"
#include "lsvt/manifest.hpp"

namespace lsvt {

// Generative knobs of one class; loosely "lesion" stand-ins on a fundus-like disk.
struct ClassParams {
  std::size_t blob_count = 1;   // bright exudate-like spots
  double blob_intensity = 0.4;  // added brightness at a spot centre
  double ring_radius = 0.18;    // optic-disc ring radius as a fraction of the image size
  std::size_t line_density = 2; // number of dark vessel-like lines

  bool operator==(const ClassParams&) const = default;
};

struct SyntheticSpec {
  std::size_t image_size = 32;
  std::size_t classes = 2;
  std::vector<ClassParams> params;  // empty -> default_class_params(classes)
  double noise = 0.8;               // scales position jitter, pixel noise and brightness variation
  std::uint64_t seed = 7;
  std::size_t n_train = 200;
  std::size_t n_val = 0;
  std::size_t n_test = 50;
  std::string dataset = "synthetic";

  // Distinct classes must have distinct params; noise in [0, 1]; sizes >= 8.
  void validate() const;
  std::vector<ClassParams> resolved_params() const;
};

std::vector<ClassParams> default_class_params(std::size_t classes);

// One image; pure function of (spec, label, index).
RawImage render_synthetic(const SyntheticSpec& spec, int label, std::uint64_t index);

// Writes out_dir/images/<split>_NNNN.png and out_dir/manifest.csv. Labels cycle through the
// classes within each split, so splits are balanced.
Manifest generate_synthetic(const SyntheticSpec& spec, const std::filesystem::path& out_dir);

}  // namespace lsvt
