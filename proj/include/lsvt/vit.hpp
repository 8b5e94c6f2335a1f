#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lsvt/attention.hpp"
#include "lsvt/image.hpp"
#include "lsvt/tensor.hpp"

namespace lsvt {

struct ViTConfig {
  std::string preset = "tiny";
  std::size_t image_size = 32;
  std::size_t patch_size = 8;
  std::size_t channels = 3;
  std::size_t depth = 4;
  std::size_t d_model = 64;
  std::size_t heads = 4;
  double mlp_ratio = 4.0;
  std::size_t head_hidden = 256;
  std::size_t proto_dim = 256;  // K
  // Weight init std; 0 selects 1/sqrt(fan_in) for weight matrices and 0.02 for the class
  // token and positional embedding.
  double init_std = 0.0;
  // Projection-head init; 0 selects 1/sqrt(fan_in) so prototype logits start at unit scale.
  double head_init_std = 0.0;

  // "tiny" (default) or "deit-b".
  static ViTConfig from_preset(std::string_view name);

  void validate() const;
  std::size_t grid() const { return image_size / patch_size; }
  std::size_t num_patches() const { return grid() * grid(); }
  std::size_t mlp_hidden() const;
  std::size_t head_dim() const { return d_model / heads; }
};

// Parameter count derived directly from the configuration.
std::size_t closed_form_parameter_count(const ViTConfig& config);

template <typename T>
struct TransformerBlock {
  Tensor<T> ln1_gain, ln1_bias;
  AttentionParams<T> attn;
  Tensor<T> ln2_gain, ln2_bias;
  Tensor<T> fc1_w, fc1_b, fc2_w, fc2_b;
};

template <typename T>
using NamedTensors = std::vector<std::pair<std::string, Tensor<T>>>;

// Plain class-token vision transformer (pre-norm blocks) with a two-layer projection head
// d_model -> head_hidden -> K. Copies are deep; tensors are never shared between models.
template <typename T>
class ViTModel {
 public:
  ViTModel(const ViTConfig& config, std::uint64_t seed);
  ViTModel(const ViTModel& other);
  ViTModel& operator=(const ViTModel& other);
  ViTModel(ViTModel&&) noexcept = default;
  ViTModel& operator=(ViTModel&&) noexcept = default;

  const ViTConfig& config() const { return config_; }

  // Handles into this model's storage, in a fixed documented order.
  NamedTensors<T> named_parameters() const;
  std::size_t parameter_count() const;
  void set_requires_grad(bool value);
  void zero_grad();

  // Converts element type, e.g. a float checkpoint into a double model for verification.
  template <typename U>
  ViTModel<U> cast() const;

  Tensor<T> patch_w, patch_b;  // (p·p·C)×d, d
  Tensor<T> cls_token;         // 1×d
  Tensor<T> pos_embed;         // (1 + grid²)×d
  std::vector<TransformerBlock<T>> blocks;
  Tensor<T> norm_gain, norm_bias;
  Tensor<T> head_w1, head_b1, head_w2, head_b2;

 private:
  ViTModel() = default;
  template <typename U>
  friend class ViTModel;

  ViTConfig config_;
};

template <typename T>
struct ViTOutput {
  Tensor<T> cls_embed;     // B×d_model
  Tensor<T> proto_logits;  // B×K
  Tensor<T> attn_last;     // B×heads×T×T, final block attention weights (never on a tape)
};

// Tokens of one image: (H/p·W/p) rows of length p·p·C. Patches are ordered row-major from the
// top-left; inside a patch pixels are row-major and channel-last.
template <typename T>
Tensor<T> patchify(const Image& image, std::size_t patch_size);

// All images must share one square size divisible by the patch size; the positional
// embedding is bilinearly resampled when that size differs from config().image_size.
template <typename T>
ViTOutput<T> vit_forward(const ViTModel<T>& model, const std::vector<Image>& batch);

struct Heatmap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;  // row-major, in [0, 1]
};

// Final-block class-token attention to the patch tokens, averaged over heads, bilinearly
// upsampled to the image size and min-max normalised. A flat map (max == min) is all zeros.
template <typename T>
Heatmap extract_attention_map(const ViTModel<T>& model, const Image& image);

// Min-max normalisation used by extract_attention_map.
void normalize_min_max(std::vector<double>& values);

// 8-bit grayscale PNG, value v -> round(255·v).
void write_heatmap_png(const Heatmap& map, const std::filesystem::path& path);
// One CSV line per image row, values with 6 decimals.
void write_heatmap_csv(const Heatmap& map, const std::filesystem::path& path);
Heatmap read_heatmap_csv(const std::filesystem::path& path);
// The input image tinted red in proportion to the map; requires matching sizes.
RawImage heatmap_overlay(const RawImage& image, const Heatmap& map, double alpha = 0.6);

}  // namespace lsvt
