#include "lsvt/vit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <random>

#include "lsvt/errors.hpp"
#include "lsvt/image_io.hpp"
#include "lsvt/ops.hpp"

namespace lsvt {

namespace {

constexpr double kLayerNormEps = 1e-6;
constexpr double kTokenInitStd = 0.02;

template <typename T>
Tensor<T> normal_param(Shape shape, std::mt19937_64& rng, double std_dev) {
  std::normal_distribution<double> dist(0.0, std_dev);
  std::vector<T> data(numel(shape));
  for (auto& v : data) v = static_cast<T>(dist(rng));
  return Tensor<T>(std::move(shape), std::move(data), true);
}

template <typename T>
Tensor<T> const_param(Shape shape, T value) {
  return Tensor<T>::full(std::move(shape), value, true);
}

// Visits every parameter slot of a model in the canonical order.
template <typename Model, typename F>
void visit_parameters(Model& m, F&& f) {
  f("patch.weight", m.patch_w);
  f("patch.bias", m.patch_b);
  f("cls_token", m.cls_token);
  f("pos_embed", m.pos_embed);
  for (std::size_t i = 0; i < m.blocks.size(); ++i) {
    auto& b = m.blocks[i];
    const std::string p = "blocks." + std::to_string(i) + ".";
    f(p + "ln1.gain", b.ln1_gain);
    f(p + "ln1.bias", b.ln1_bias);
    for (std::size_t h = 0; h < b.attn.w_q.size(); ++h) {
      const std::string hs = std::to_string(h);
      f(p + "attn.q." + hs, b.attn.w_q[h]);
      f(p + "attn.k." + hs, b.attn.w_k[h]);
      f(p + "attn.v." + hs, b.attn.w_v[h]);
    }
    f(p + "attn.out.weight", b.attn.w_o);
    f(p + "attn.out.bias", b.attn.b_o);
    f(p + "ln2.gain", b.ln2_gain);
    f(p + "ln2.bias", b.ln2_bias);
    f(p + "mlp.fc1.weight", b.fc1_w);
    f(p + "mlp.fc1.bias", b.fc1_b);
    f(p + "mlp.fc2.weight", b.fc2_w);
    f(p + "mlp.fc2.bias", b.fc2_b);
  }
  f("norm.gain", m.norm_gain);
  f("norm.bias", m.norm_bias);
  f("head.fc1.weight", m.head_w1);
  f("head.fc1.bias", m.head_b1);
  f("head.fc2.weight", m.head_w2);
  f("head.fc2.bias", m.head_b2);
}

}  // namespace

ViTConfig ViTConfig::from_preset(std::string_view name) {
  ViTConfig c;
  if (name == "tiny") return c;
  if (name == "deit-b") {
    c.preset = "deit-b";
    c.image_size = 256;
    c.patch_size = 16;
    c.depth = 12;
    c.d_model = 768;
    c.heads = 12;
    return c;
  }
  throw ConfigError("unknown model preset '" + std::string(name) + "'");
}

std::size_t ViTConfig::mlp_hidden() const {
  return static_cast<std::size_t>(std::lround(mlp_ratio * static_cast<double>(d_model)));
}

void ViTConfig::validate() const {
  if (patch_size == 0 || image_size == 0 || image_size % patch_size != 0) {
    throw ConfigError("image_size " + std::to_string(image_size) + " is not divisible by patch_size " +
                      std::to_string(patch_size));
  }
  if (channels == 0 || depth == 0 || d_model == 0 || heads == 0 || proto_dim == 0 || head_hidden == 0) {
    throw ConfigError("model dimensions must be positive");
  }
  if (d_model % heads != 0) {
    throw ConfigError("d_model " + std::to_string(d_model) + " is not divisible by heads " +
                      std::to_string(heads));
  }
  if (!(mlp_ratio > 0.0) || mlp_hidden() == 0) throw ConfigError("mlp_ratio must be positive");
  if (!(init_std >= 0.0)) throw ConfigError("init_std must be non-negative");
  if (!(head_init_std >= 0.0)) throw ConfigError("head_init_std must be non-negative");
}

std::size_t closed_form_parameter_count(const ViTConfig& c) {
  const std::size_t d = c.d_model, p = c.patch_size, n = c.num_patches();
  const std::size_t dh = d / c.heads, hidden = c.mlp_hidden();
  const std::size_t patch = p * p * c.channels * d + d;
  const std::size_t tokens = d + (n + 1) * d;
  const std::size_t attention = c.heads * 3 * d * dh + c.heads * dh * d + d;
  const std::size_t mlp = d * hidden + hidden + hidden * d + d;
  const std::size_t block = 4 * d + attention + mlp;
  const std::size_t head = d * c.head_hidden + c.head_hidden + c.head_hidden * c.proto_dim + c.proto_dim;
  return patch + tokens + c.depth * block + 2 * d + head;
}

template <typename T>
ViTModel<T>::ViTModel(const ViTConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const auto& c = config_;
  const std::size_t d = c.d_model, dh = c.head_dim();
  const auto w_std = [&](std::size_t fan_in) {
    return c.init_std > 0.0 ? c.init_std : 1.0 / std::sqrt(static_cast<double>(fan_in));
  };
  const double token_std = c.init_std > 0.0 ? c.init_std : kTokenInitStd;
  const std::size_t patch_in = c.patch_size * c.patch_size * c.channels;
  patch_w = normal_param<T>({patch_in, d}, rng, w_std(patch_in));
  patch_b = const_param<T>({d}, T{0});
  cls_token = normal_param<T>({1, d}, rng, token_std);
  pos_embed = normal_param<T>({1 + c.num_patches(), d}, rng, token_std);
  for (std::size_t i = 0; i < c.depth; ++i) {
    TransformerBlock<T> b;
    b.ln1_gain = const_param<T>({d}, T{1});
    b.ln1_bias = const_param<T>({d}, T{0});
    b.attn = AttentionParams<T>::random(c.heads, d, dh, dh, rng, w_std(d));
    b.ln2_gain = const_param<T>({d}, T{1});
    b.ln2_bias = const_param<T>({d}, T{0});
    b.fc1_w = normal_param<T>({d, c.mlp_hidden()}, rng, w_std(d));
    b.fc1_b = const_param<T>({c.mlp_hidden()}, T{0});
    b.fc2_w = normal_param<T>({c.mlp_hidden(), d}, rng, w_std(c.mlp_hidden()));
    b.fc2_b = const_param<T>({d}, T{0});
    blocks.push_back(std::move(b));
  }
  norm_gain = const_param<T>({d}, T{1});
  norm_bias = const_param<T>({d}, T{0});
  const auto head_std = [&](std::size_t fan_in) {
    return c.head_init_std > 0.0 ? c.head_init_std : 1.0 / std::sqrt(static_cast<double>(fan_in));
  };
  head_w1 = normal_param<T>({d, c.head_hidden}, rng, head_std(d));
  head_b1 = const_param<T>({c.head_hidden}, T{0});
  head_w2 = normal_param<T>({c.head_hidden, c.proto_dim}, rng, head_std(c.head_hidden));
  head_b2 = const_param<T>({c.proto_dim}, T{0});
}

template <typename T>
ViTModel<T>::ViTModel(const ViTModel& other)
    : patch_w(other.patch_w), patch_b(other.patch_b), cls_token(other.cls_token),
      pos_embed(other.pos_embed), blocks(other.blocks), norm_gain(other.norm_gain),
      norm_bias(other.norm_bias), head_w1(other.head_w1), head_b1(other.head_b1),
      head_w2(other.head_w2), head_b2(other.head_b2), config_(other.config_) {
  visit_parameters(*this, [](const std::string&, Tensor<T>& t) { t = t.clone(); });
}

template <typename T>
ViTModel<T>& ViTModel<T>::operator=(const ViTModel& other) {
  if (this != &other) {
    ViTModel copy(other);
    *this = std::move(copy);
  }
  return *this;
}

template <typename T>
NamedTensors<T> ViTModel<T>::named_parameters() const {
  NamedTensors<T> out;
  visit_parameters(const_cast<ViTModel&>(*this),
                   [&](const std::string& name, Tensor<T>& t) { out.emplace_back(name, t); });
  return out;
}

template <typename T>
std::size_t ViTModel<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : named_parameters()) n += t.size();
  return n;
}

template <typename T>
void ViTModel<T>::set_requires_grad(bool value) {
  visit_parameters(*this, [value](const std::string&, Tensor<T>& t) { t.set_requires_grad(value); });
}

template <typename T>
void ViTModel<T>::zero_grad() {
  visit_parameters(*this, [](const std::string&, Tensor<T>& t) { t.zero_grad(); });
}

template <typename T>
template <typename U>
ViTModel<U> ViTModel<T>::cast() const {
  ViTModel<U> out;
  out.config_ = config_;
  out.blocks.resize(blocks.size());
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    auto& a = out.blocks[i].attn;
    const auto& src = blocks[i].attn;
    a.heads = src.heads;
    a.d_model = src.d_model;
    a.d_k = src.d_k;
    a.d_v = src.d_v;
    a.w_q.resize(src.heads);
    a.w_k.resize(src.heads);
    a.w_v.resize(src.heads);
  }
  const auto source = named_parameters();
  std::size_t i = 0;
  visit_parameters(out, [&](const std::string&, Tensor<U>& t) { t = lsvt::cast<U>(source[i++].second); });
  return out;
}

template <typename T>
Tensor<T> patchify(const Image& image, std::size_t patch_size) {
  if (patch_size == 0 || image.height % patch_size != 0 || image.width % patch_size != 0) {
    throw ShapeError("patchify: " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                     " image is not divisible into " + std::to_string(patch_size) + "-pixel patches");
  }
  const std::size_t gh = image.height / patch_size, gw = image.width / patch_size;
  const std::size_t len = patch_size * patch_size * image.channels;
  std::vector<T> data(gh * gw * len);
  std::size_t o = 0;
  for (std::size_t py = 0; py < gh; ++py)
    for (std::size_t px = 0; px < gw; ++px)
      for (std::size_t y = 0; y < patch_size; ++y)
        for (std::size_t x = 0; x < patch_size; ++x)
          for (std::size_t c = 0; c < image.channels; ++c)
            data[o++] = static_cast<T>(image.at(py * patch_size + y, px * patch_size + x, c));
  return Tensor<T>({gh * gw, len}, std::move(data));
}

template <typename T>
ViTOutput<T> vit_forward(const ViTModel<T>& model, const std::vector<Image>& batch) {
  const auto& c = model.config();
  if (batch.empty()) throw ShapeError("vit_forward: empty batch");
  const std::size_t size = batch.front().height;
  for (const auto& img : batch) {
    if (img.channels != c.channels) {
      throw ShapeError("vit_forward: image has " + std::to_string(img.channels) +
                       " channels, model expects " + std::to_string(c.channels));
    }
    if (img.height != size || img.width != size) {
      throw ShapeError("vit_forward: batch images must share one square size");
    }
  }
  if (size % c.patch_size != 0) {
    throw ShapeError("vit_forward: image size " + std::to_string(size) +
                     " is not divisible by patch size " + std::to_string(c.patch_size));
  }
  const std::size_t B = batch.size();
  const std::size_t g = size / c.patch_size, n = g * g, tokens = n + 1;

  std::vector<T> patch_data;
  for (const auto& img : batch) {
    auto p = patchify<T>(img, c.patch_size);
    patch_data.insert(patch_data.end(), p.values().begin(), p.values().end());
  }
  const Tensor<T> patches({B * n, c.patch_size * c.patch_size * c.channels}, std::move(patch_data));
  auto emb = add_bias(matmul(patches, model.patch_w), model.patch_b);

  auto pos_patch = slice_rows(model.pos_embed, 1, c.num_patches());
  if (g != c.grid()) {
    auto m = bilinear_matrix(c.grid(), c.grid(), g, g);
    std::vector<T> mt(m.begin(), m.end());
    pos_patch = matmul(Tensor<T>({n, c.num_patches()}, std::move(mt)), pos_patch);
  }
  std::vector<std::size_t> tile(B * n);
  for (std::size_t i = 0; i < tile.size(); ++i) tile[i] = i % n;
  emb = add(emb, gather_rows(pos_patch, tile));
  auto cls = add(model.cls_token, slice_rows(model.pos_embed, 0, 1));
  auto cls_all = gather_rows(cls, std::vector<std::size_t>(B, 0));

  // Interleave to [cls_b, patch_b...] per sample.
  std::vector<std::size_t> order;
  order.reserve(B * tokens);
  for (std::size_t b = 0; b < B; ++b) {
    order.push_back(b);
    for (std::size_t i = 0; i < n; ++i) order.push_back(B + b * n + i);
  }
  auto x = gather_rows(concat_rows<T>({cls_all, emb}), order);

  std::vector<T> attn_last(B * c.heads * tokens * tokens);
  for (std::size_t bi = 0; bi < model.blocks.size(); ++bi) {
    const auto& blk = model.blocks[bi];
    const bool last = bi + 1 == model.blocks.size();
    auto h = layer_norm(x, blk.ln1_gain, blk.ln1_bias, static_cast<T>(kLayerNormEps));
    std::vector<Tensor<T>> outs;
    outs.reserve(B);
    std::vector<Tensor<T>> weights;
    for (std::size_t b = 0; b < B; ++b) {
      auto hb = slice_rows(h, b * tokens, tokens);
      outs.push_back(multi_head_attention(hb, hb, blk.attn, last ? &weights : nullptr));
      if (last) {
        for (std::size_t hd = 0; hd < c.heads; ++hd) {
          std::copy(weights[hd].values().begin(), weights[hd].values().end(),
                    attn_last.begin() + static_cast<std::ptrdiff_t>((b * c.heads + hd) * tokens * tokens));
        }
      }
    }
    x = add(x, B == 1 ? outs.front() : concat_rows(outs));
    auto h2 = layer_norm(x, blk.ln2_gain, blk.ln2_bias, static_cast<T>(kLayerNormEps));
    auto mlp = add_bias(matmul(gelu(add_bias(matmul(h2, blk.fc1_w), blk.fc1_b)), blk.fc2_w), blk.fc2_b);
    x = add(x, mlp);
  }
  x = layer_norm(x, model.norm_gain, model.norm_bias, static_cast<T>(kLayerNormEps));
  std::vector<std::size_t> cls_rows(B);
  for (std::size_t b = 0; b < B; ++b) cls_rows[b] = b * tokens;
  auto cls_embed = gather_rows(x, cls_rows);
  // Bounded head: cosine between the normalised hidden vector and unit-norm prototypes.
  auto hidden = normalize_rows(gelu(add_bias(matmul(cls_embed, model.head_w1), model.head_b1)));
  auto prototypes = transpose(normalize_rows(transpose(model.head_w2)));
  auto logits = add_bias(matmul(hidden, prototypes), model.head_b2);
  return {std::move(cls_embed), std::move(logits),
          Tensor<T>({B, c.heads, tokens, tokens}, std::move(attn_last))};
}

void normalize_min_max(std::vector<double>& values) {
  if (values.empty()) return;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double mn = *lo, mx = *hi;
  if (!(mx > mn)) {
    std::fill(values.begin(), values.end(), 0.0);
    return;
  }
  for (auto& v : values) v = std::clamp((v - mn) / (mx - mn), 0.0, 1.0);
}

template <typename T>
Heatmap extract_attention_map(const ViTModel<T>& model, const Image& image) {
  NoTapeScope<T> no_tape;
  const auto out = vit_forward(model, {image});
  const std::size_t heads = model.config().heads;
  const std::size_t g = image.height / model.config().patch_size, n = g * g, tokens = n + 1;
  std::vector<double> grid(n, 0.0);
  const auto& a = out.attn_last.values();
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t row0 = h * tokens * tokens;  // class-token query row
    for (std::size_t i = 0; i < n; ++i) grid[i] += static_cast<double>(a[row0 + 1 + i]);
  }
  for (auto& v : grid) v /= static_cast<double>(heads);
  Heatmap map{image.height, image.width, resize_grid(grid, g, g, image.height, image.width)};
  normalize_min_max(map.values);
  return map;
}

void write_heatmap_png(const Heatmap& map, const std::filesystem::path& path) {
  if (map.values.size() != map.height * map.width) throw ShapeError("heatmap size does not match its dimensions");
  RawImage img{map.height, map.width, 1, std::vector<std::uint8_t>(map.values.size())};
  for (std::size_t i = 0; i < map.values.size(); ++i) {
    img.pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(map.values[i], 0.0, 1.0) * 255.0));
  }
  write_png(path, img);
}

void write_heatmap_csv(const Heatmap& map, const std::filesystem::path& path) {
  if (map.values.size() != map.height * map.width) throw ShapeError("heatmap size does not match its dimensions");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write '" + path.string() + "'");
  char buf[32];
  for (std::size_t y = 0; y < map.height; ++y) {
    for (std::size_t x = 0; x < map.width; ++x) {
      std::snprintf(buf, sizeof(buf), "%.6f", map.values[y * map.width + x]);
      out << (x ? "," : "") << buf;
    }
    out << '\n';
  }
}

Heatmap read_heatmap_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot read '" + path.string() + "'");
  Heatmap map;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string cell;
    std::size_t cols = 0;
    while (std::getline(row, cell, ',')) {
      try {
        map.values.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw FormatError(path.string() + ": bad heatmap value '" + cell + "'");
      }
      ++cols;
    }
    if (map.height == 0) map.width = cols;
    if (cols != map.width) throw FormatError(path.string() + ": ragged heatmap row " + std::to_string(map.height + 1));
    ++map.height;
  }
  return map;
}

RawImage heatmap_overlay(const RawImage& image, const Heatmap& map, double alpha) {
  if (image.height != map.height || image.width != map.width || (image.channels != 1 && image.channels != 3)) {
    throw ShapeError("heatmap_overlay: image and map sizes differ");
  }
  RawImage out{image.height, image.width, 3, std::vector<std::uint8_t>(image.height * image.width * 3)};
  for (std::size_t i = 0; i < map.values.size(); ++i) {
    const double w = alpha * std::clamp(map.values[i], 0.0, 1.0);
    for (std::size_t c = 0; c < 3; ++c) {
      const double v = image.pixels[i * image.channels + (image.channels == 3 ? c : 0)];
      const double tint = c == 0 ? 255.0 : 0.0;
      out.pixels[i * 3 + c] = static_cast<std::uint8_t>(std::lround((1 - w) * v + w * tint));
    }
  }
  return out;
}

template class ViTModel<float>;
template class ViTModel<double>;
template ViTModel<double> ViTModel<float>::cast<double>() const;
template ViTModel<float> ViTModel<double>::cast<float>() const;
template ViTModel<float> ViTModel<float>::cast<float>() const;
template ViTModel<double> ViTModel<double>::cast<double>() const;
template TensorF patchify<float>(const Image&, std::size_t);
template TensorD patchify<double>(const Image&, std::size_t);
template ViTOutput<float> vit_forward(const ViTModel<float>&, const std::vector<Image>&);
template ViTOutput<double> vit_forward(const ViTModel<double>&, const std::vector<Image>&);
template Heatmap extract_attention_map(const ViTModel<float>&, const Image&);
template Heatmap extract_attention_map(const ViTModel<double>&, const Image&);

}  // namespace lsvt
