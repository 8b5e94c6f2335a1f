#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "lsvt/errors.hpp"
#include "lsvt/gradcheck.hpp"
#include "lsvt/image_io.hpp"
#include "lsvt/ops.hpp"
#include "lsvt/vit.hpp"
#include "test_util.hpp"

using namespace lsvt;

namespace {

Image random_image(std::size_t size, std::size_t channels, std::mt19937_64& rng) {
  std::normal_distribution<float> dist(0.0f, 1.0f);
  Image img(size, size, channels);
  for (auto& v : img.pixels) v = dist(rng);
  return img;
}

ViTConfig small_config() {
  ViTConfig c = ViTConfig::from_preset("tiny");
  c.depth = 2;
  c.d_model = 16;
  c.heads = 2;
  c.head_hidden = 12;
  c.proto_dim = 10;
  return c;
}

}  // namespace

TEST_CASE("presets") {
  auto tiny = ViTConfig::from_preset("tiny");
  CHECK(tiny.depth == 4);
  CHECK(tiny.d_model == 64);
  CHECK(tiny.heads == 4);
  CHECK(tiny.patch_size == 8);
  CHECK(tiny.image_size == 32);
  CHECK(tiny.proto_dim == 256);
  auto b = ViTConfig::from_preset("deit-b");
  CHECK(b.depth == 12);
  CHECK(b.d_model == 768);
  CHECK(b.heads == 12);
  CHECK(b.patch_size == 16);
  CHECK_THROWS_AS(ViTConfig::from_preset("resnet"), ConfigError);
  auto bad = tiny;
  bad.image_size = 30;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("patchify examples") {
  Image img(32, 32, 1, 0.0f);
  auto t = patchify<double>(img, 8);
  CHECK(t.shape() == Shape{16, 64});

  Image five(32, 32, 1, 5.0f);
  const auto fives = patchify<double>(five, 8);
  for (auto v : fives.values()) CHECK(v == 5.0);

  Image dot(32, 32, 1, 0.0f);
  dot.at(0, 0, 0) = 1.0f;
  auto p = patchify<double>(dot, 8);
  for (std::size_t r = 0; r < 16; ++r)
    for (std::size_t c = 0; c < 64; ++c) CHECK(p.at(r, c) == ((r == 0 && c == 0) ? 1.0 : 0.0));

  // index map: pixel (y, x, ch) -> token (y/p)*grid + x/p, offset ((y%p)*p + x%p)*C + ch
  Image rgb(16, 16, 3, 0.0f);
  rgb.at(9, 6, 2) = 7.0f;
  auto q = patchify<double>(rgb, 4);
  const std::size_t token = (9 / 4) * 4 + 6 / 4, offset = ((9 % 4) * 4 + 6 % 4) * 3 + 2;
  CHECK(q.at(token, offset) == 7.0);
  double total = 0;
  for (auto v : q.values()) total += v;
  CHECK(total == 7.0);

  CHECK_THROWS_AS(patchify<double>(Image(30, 32, 1), 8), ShapeError);
}

TEST_CASE("parameter count matches the closed form") {
  auto tiny = ViTConfig::from_preset("tiny");
  ViTModel<float> m(tiny, 1);
  CHECK(m.parameter_count() == closed_form_parameter_count(tiny));
  auto b = ViTConfig::from_preset("deit-b");
  ViTModel<float> big(b, 1);
  CHECK(big.parameter_count() == closed_form_parameter_count(b));
  // Backbone of ViT-B/16 at 256 px: 85,646,592 weights + class token and positions.
  CHECK(closed_form_parameter_count(b) > 85'000'000);
}

TEST_CASE("forward shape contract and determinism") {
  std::mt19937_64 rng(3);
  auto cfg = small_config();
  ViTModel<float> model(cfg, 42);
  auto a = random_image(32, 3, rng);
  auto b = random_image(32, 3, rng);
  auto out = vit_forward(model, {a, b, a});
  CHECK(out.cls_embed.shape() == Shape{3, cfg.d_model});
  CHECK(out.proto_logits.shape() == Shape{3, cfg.proto_dim});
  CHECK(out.attn_last.shape() == Shape{3, cfg.heads, 17, 17});
  for (std::size_t c = 0; c < cfg.d_model; ++c) CHECK(out.cls_embed.at(0, c) == out.cls_embed.at(2, c));
  for (std::size_t c = 0; c < cfg.proto_dim; ++c) CHECK(out.proto_logits.at(0, c) == out.proto_logits.at(2, c));
  auto again = vit_forward(model, {a, b, a});
  CHECK(again.proto_logits.values() == out.proto_logits.values());

  // local-view sized inputs use the interpolated positional embedding
  auto local = vit_forward(model, {random_image(16, 3, rng)});
  CHECK(local.attn_last.shape() == Shape{1, cfg.heads, 5, 5});

  CHECK_THROWS_AS(vit_forward(model, {random_image(32, 1, rng)}), ShapeError);
  CHECK_THROWS_AS(vit_forward(model, {random_image(20, 3, rng)}), ShapeError);
}

TEST_CASE("zero head weights give zero logits") {
  std::mt19937_64 rng(4);
  ViTModel<float> model(small_config(), 5);
  for (auto& v : model.head_w2.mutable_data()) v = 0.0f;
  auto out = vit_forward(model, {random_image(32, 3, rng), random_image(32, 3, rng)});
  for (auto v : out.proto_logits.values()) CHECK(v == 0.0f);
}

TEST_CASE("model copies are deep") {
  ViTModel<float> a(small_config(), 1);
  ViTModel<float> b = a;
  b.head_b2.mutable_data()[0] = 3.0f;
  CHECK(a.head_b2.at(0) == 0.0f);
  auto pa = a.named_parameters();
  auto pb = b.named_parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].first == pb[i].first);
    CHECK_FALSE(pa[i].second.same_storage(pb[i].second));
  }
}

TEST_CASE("attention map contract") {
  std::mt19937_64 rng(6);
  ViTModel<float> model(small_config(), 7);
  auto img = random_image(32, 3, rng);
  auto map = extract_attention_map(model, img);
  CHECK(map.height == 32);
  CHECK(map.width == 32);
  CHECK(map.values.size() == 32 * 32);
  double mn = 1, mx = 0;
  for (auto v : map.values) {
    mn = std::min(mn, v);
    mx = std::max(mx, v);
  }
  CHECK(mn >= 0.0);
  CHECK(mx <= 1.0);
  CHECK(mx == 1.0);
  CHECK(extract_attention_map(model, img).values == map.values);

  SUBCASE("png and csv exports agree within one grey level") {
    const auto dir = std::filesystem::temp_directory_path() / "lsvt_test_attmap";
    std::filesystem::create_directories(dir);
    write_heatmap_png(map, dir / "m.png");
    write_heatmap_csv(map, dir / "m.csv");
    const auto png = decode_image(dir / "m.png");
    const auto csv = read_heatmap_csv(dir / "m.csv");
    REQUIRE(png.channels == 1);
    REQUIRE(png.height == 32);
    REQUIRE(csv.height == 32);
    REQUIRE(csv.width == 32);
    for (std::size_t i = 0; i < csv.values.size(); ++i) {
      CHECK(std::abs(png.pixels[i] / 255.0 - csv.values[i]) <= 1.0 / 255);
      CHECK(std::abs(csv.values[i] - map.values[i]) <= 5e-7);
    }
    const auto overlay = heatmap_overlay(RawImage{32, 32, 1, std::vector<std::uint8_t>(32 * 32, 0)}, map, 1.0);
    for (std::size_t i = 0; i < map.values.size(); ++i) CHECK(overlay.pixels[i * 3] == png.pixels[i]);
    CHECK_THROWS_AS(heatmap_overlay(RawImage{8, 8, 3, std::vector<std::uint8_t>(192)}, map), ShapeError);
    std::ofstream(dir / "bad.csv") << "0.1,0.2\n0.3\n";
    CHECK_THROWS_AS(read_heatmap_csv(dir / "bad.csv"), FormatError);
    std::filesystem::remove_all(dir);
  }

  // batch composition does not change a sample's final-layer attention
  auto other = random_image(32, 3, rng);
  auto single = vit_forward(model, {img}).attn_last.values();
  auto batched = vit_forward(model, {other, img, other}).attn_last.values();
  const std::size_t per = single.size();
  CHECK(std::equal(single.begin(), single.end(), batched.begin() + static_cast<std::ptrdiff_t>(per)));

  // zero query/key projections force uniform attention, which normalises to all zeros
  auto& last = model.blocks.back().attn;
  for (auto& w : last.w_q)
    for (auto& v : w.mutable_data()) v = 0.0f;
  auto flat = extract_attention_map(model, img);
  for (auto v : flat.values) CHECK(v == 0.0);
}

TEST_CASE("min-max normalisation") {
  std::vector<double> v{2, 4, 3};
  normalize_min_max(v);
  CHECK(v == std::vector<double>{0, 1, 0.5});
  std::vector<double> c{3, 3};
  normalize_min_max(c);
  CHECK(c == std::vector<double>{0, 0});
}

TEST_CASE("vit forward gradients match central differences") {
  // tiny preset geometry shrunk to 4x4 images with 2-pixel patches
  auto cfg = ViTConfig::from_preset("tiny");
  cfg.image_size = 4;
  cfg.patch_size = 2;
  cfg.init_std = 0.15;
  ViTModel<double> model(cfg, 11);
  std::mt19937_64 rng(12);
  std::vector<Image> batch{random_image(4, 3, rng), random_image(4, 3, rng)};
  auto w = lsvt::testing::random_tensor({2, cfg.proto_dim}, rng, -1, 1);
  std::vector<TensorD> leaves;
  for (auto& [name, t] : model.named_parameters()) leaves.push_back(t);
  auto r = finite_diff_check_params([&] { return sum(mul(vit_forward(model, batch).proto_logits, w)); },
                                    leaves, 1e-2, 4, kRidders);
  INFO("worst coordinate " << r.worst_index << " analytic " << r.analytic[r.worst_index] << " numeric "
                           << r.numeric[r.worst_index]);
  CHECK(r.max_relative_error < 1e-6);
}
