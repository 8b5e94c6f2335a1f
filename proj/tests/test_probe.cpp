#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "doctest.h"
#include "lsvt/errors.hpp"
#include "lsvt/gradcheck.hpp"
#include "lsvt/probe.hpp"
#include "test_util.hpp"

using namespace lsvt;
namespace fs = std::filesystem;

namespace {

// Trapezoidal area under the empirical ROC curve, thresholds swept over distinct scores.
double trapezoid_auc(const std::vector<double>& s, const std::vector<int>& y) {
  std::vector<std::size_t> order(s.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s[a] > s[b]; });
  double P = 0, N = 0;
  for (int v : y) (v ? P : N) += 1;
  double tp = 0, fp = 0, prev_tpr = 0, prev_fpr = 0, area = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && s[order[j]] == s[order[i]]) {
      (y[order[j]] ? tp : fp) += 1;
      ++j;
    }
    const double tpr = tp / P, fpr = fp / N;
    area += (fpr - prev_fpr) * (tpr + prev_tpr) / 2;
    prev_tpr = tpr;
    prev_fpr = fpr;
    i = j;
  }
  return area;
}

Tensor<double> probs_from_scores(const std::vector<double>& s1) {
  std::vector<double> v;
  for (double s : s1) {
    v.push_back(1 - s);
    v.push_back(s);
  }
  return Tensor<double>({s1.size(), 2}, v);
}

ViTConfig small_model() {
  ViTConfig c;
  c.preset = "test";
  c.image_size = 16;
  c.patch_size = 4;
  c.depth = 1;
  c.d_model = 16;
  c.heads = 2;
  c.head_hidden = 16;
  c.proto_dim = 8;
  return c;
}

std::vector<Image> random_images(std::size_t n, std::size_t size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> dist(0.0f, 1.0f);
  std::vector<Image> out;
  for (std::size_t i = 0; i < n; ++i) {
    Image im(size, size, 3);
    for (auto& v : im.pixels) v = dist(rng);
    out.push_back(std::move(im));
  }
  return out;
}

}  // namespace

TEST_CASE("roc_auc_binary examples") {
  CHECK(roc_auc_binary({0.9, 0.8, 0.3, 0.2}, {1, 1, 0, 0}) == 1.0);
  CHECK(roc_auc_binary({0.9, 0.8, 0.3, 0.2}, {1, 0, 1, 0}) == 0.75);
  CHECK(roc_auc_binary({0.5, 0.5, 0.5, 0.5}, {1, 0, 1, 0}) == 0.5);
  CHECK(roc_auc_binary({0.1, 0.2}, {1, 0}) == 0.0);
  CHECK_THROWS_AS(roc_auc_binary({0.1, 0.2}, {1, 1}), DomainError);
  CHECK_THROWS_AS(roc_auc_binary({NAN, 0.2}, {1, 0}), DomainError);
  CHECK_THROWS_AS(roc_auc_binary({0.1, 0.2}, {1, 2}), DomainError);
  CHECK_THROWS_AS(roc_auc_binary({0.1}, {1, 0}), ShapeError);
}

TEST_CASE("roc_auc_binary properties on random instances") {
  std::mt19937_64 rng(77);
  double worst = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng() % 60;
    std::vector<double> s(n);
    std::vector<int> y(n);
    // Coarse scores so ties are common.
    for (auto& v : s) v = static_cast<double>(rng() % 12) / 11.0;
    for (auto& v : y) v = static_cast<int>(rng() % 2);
    y[0] = 0;
    y[1] = 1;
    const double auc = roc_auc_binary(s, y);
    worst = std::max(worst, std::abs(auc - trapezoid_auc(s, y)));
    CHECK(auc >= 0.0);
    CHECK(auc <= 1.0);
    // Strictly monotone transform leaves AUC unchanged; negating scores complements it.
    std::vector<double> t(n), neg(n);
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = std::exp(3 * s[i]) - 2;
      neg[i] = -s[i];
    }
    CHECK(roc_auc_binary(t, y) == auc);
    CHECK(std::abs(roc_auc_binary(neg, y) + auc - 1.0) < 1e-12);
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("macro metrics") {
  SUBCASE("two-class macro AUC equals binary AUC exactly") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<double> s(20);
      std::vector<int> y(20);
      for (auto& v : s) v = std::uniform_real_distribution<double>(0, 1)(rng);
      for (auto& v : y) v = static_cast<int>(rng() % 2);
      y[0] = 0;
      y[1] = 1;
      const auto m = macro_metrics(probs_from_scores(s), y);
      CHECK(m.auc == roc_auc_binary(s, y));
    }
  }
  SUBCASE("hand-computed three-class example") {
    const auto probs = Tensor<double>::from_rows(
        {{0.7, 0.2, 0.1}, {0.2, 0.5, 0.3}, {0.1, 0.3, 0.6}, {0.6, 0.3, 0.1}, {0.3, 0.3, 0.4}, {0.2, 0.7, 0.1}});
    const std::vector<int> y = {0, 1, 2, 1, 2, 0};
    const auto m = macro_metrics(probs, y);
    // Predictions: 0, 1, 2, 0, 2, 1 → 4 of 6 correct.
    CHECK(m.accuracy == doctest::Approx(4.0 / 6.0));
    CHECK(m.confusion[0][0] == 0.5);
    CHECK(m.confusion[0][1] == 0.5);
    CHECK(m.confusion[1][0] == 0.5);
    CHECK(m.confusion[2][2] == 1.0);
    // Per-class F1: class0 tp1 fp1 fn1 → 0.5; class1 tp1 fp1 fn1 → 0.5; class2 tp2 → 1.
    CHECK(m.f1 == doctest::Approx(2.0 / 3.0));
    for (std::size_t c = 0; c < 3; ++c) {
      std::vector<double> s;
      std::vector<int> b;
      for (std::size_t i = 0; i < 6; ++i) {
        s.push_back(probs.at(i, c));
        b.push_back(y[i] == static_cast<int>(c));
      }
      CHECK(m.per_class_auc[c] == roc_auc_binary(s, b));
    }
    CHECK(m.auc == doctest::Approx((m.per_class_auc[0] + m.per_class_auc[1] + m.per_class_auc[2]) / 3));
  }
  SUBCASE("confusion rows sum to one on random predictions") {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t C = 2 + rng() % 4, N = 30;
      auto probs = lsvt::testing::random_tensor({N, C}, rng, 0, 1);
      std::vector<int> y(N);
      for (std::size_t i = 0; i < N; ++i) y[i] = static_cast<int>(i % C);
      const auto m = macro_metrics(probs, y);
      for (const auto& row : m.confusion) {
        double total = 0;
        for (double v : row) {
          CHECK(v >= 0.0);
          total += v;
        }
        CHECK(std::abs(total - 1.0) < 1e-9);
      }
    }
  }
  SUBCASE("absent classes are excluded from macro AUC and get a zero row") {
    set_warnings_enabled(false);
    const auto probs = Tensor<double>::from_rows({{0.6, 0.3, 0.1}, {0.2, 0.7, 0.1}, {0.5, 0.4, 0.1}});
    const auto m = macro_metrics(probs, {0, 1, 0});
    set_warnings_enabled(true);
    CHECK(std::isnan(m.per_class_auc[2]));
    CHECK(m.auc == doctest::Approx((m.per_class_auc[0] + m.per_class_auc[1]) / 2));
    CHECK(m.confusion[2] == std::vector<double>{0, 0, 0});
  }
  SUBCASE("argmax ties resolve to the lowest index") {
    CHECK(argmax_row({0.5, 0.5, 0.25, 0.25}, 0, 2) == 0);
    CHECK(argmax_row({0.5, 0.5, 0.25, 0.75}, 1, 2) == 1);
  }
}

TEST_CASE("largest remainder and stratified split") {
  CHECK(largest_remainder(7, {0.6, 0.2, 0.2}) == std::vector<std::size_t>{4, 2, 1});
  CHECK(largest_remainder(10, {0.6, 0.2, 0.2}) == std::vector<std::size_t>{6, 2, 2});
  CHECK(largest_remainder(3, {0.6, 0.2, 0.2}) == std::vector<std::size_t>{2, 1, 0});

  SUBCASE("seven samples of one class") {
    const auto s = stratified_split(std::vector<int>(7, 0), SplitSpec{});
    CHECK(s.train.size() == 4);
    CHECK(s.val.size() == 2);
    CHECK(s.test.size() == 1);
  }
  SUBCASE("too few samples names the class") {
    try {
      stratified_split({0, 0, 0, 1, 1}, SplitSpec{});
      FAIL("expected ContractError");
    } catch (const ContractError& e) {
      CHECK(std::string(e.what()).find("class 1") != std::string::npos);
    }
  }
  SUBCASE("invalid fractions") {
    CHECK_THROWS_AS(stratified_split({0, 0, 0}, SplitSpec{0.5, 0.2, 0.2}), ConfigError);
    CHECK_THROWS_AS(stratified_split({0, 0, 0}, SplitSpec{1.0, 0.0, 0.0}), ConfigError);
  }
  SUBCASE("property: counts within one of exact, disjoint and exhaustive on 1000 manifests") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 1000; ++trial) {
      const std::size_t C = 1 + rng() % 5;
      std::vector<int> labels;
      for (std::size_t c = 0; c < C; ++c) {
        const std::size_t n = 3 + rng() % 40;
        for (std::size_t i = 0; i < n; ++i) labels.push_back(static_cast<int>(c));
      }
      std::shuffle(labels.begin(), labels.end(), rng);
      SplitSpec spec;
      spec.seed = rng();
      const auto s = stratified_split(labels, spec);
      std::vector<int> seen(labels.size(), 0);
      for (const auto* part : {&s.train, &s.val, &s.test})
        for (auto i : *part) ++seen[i];
      CHECK(std::all_of(seen.begin(), seen.end(), [](int v) { return v == 1; }));
      for (std::size_t c = 0; c < C; ++c) {
        const double n_c = static_cast<double>(std::count(labels.begin(), labels.end(), static_cast<int>(c)));
        const std::vector<std::pair<const std::vector<std::size_t>*, double>> parts = {
            {&s.train, 0.6}, {&s.val, 0.2}, {&s.test, 0.2}};
        for (auto [part, f] : parts) {
          const auto got = std::count_if(part->begin(), part->end(),
                                         [&](std::size_t i) { return labels[i] == static_cast<int>(c); });
          CHECK(std::abs(static_cast<double>(got) - f * n_c) <= 1.0);
        }
      }
    }
  }
  SUBCASE("deterministic by seed, different across seeds") {
    std::vector<int> labels(60);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 3);
    SplitSpec a, b;
    b.seed = 1;
    CHECK(stratified_split(labels, a).train == stratified_split(labels, a).train);
    CHECK(stratified_split(labels, a).train != stratified_split(labels, b).train);
  }
}

TEST_CASE("resolve_splits honours tags") {
  Manifest m;
  for (int i = 0; i < 20; ++i) m.records.push_back({"img" + std::to_string(i) + ".png", i % 2, "d", i < 15 ? "train" : "test"});
  const auto s = resolve_splits(m, SplitSpec{});
  CHECK(s.test.size() == 5);
  CHECK(s.train.size() + s.val.size() == 15);
  CHECK(s.val.size() >= 3);
  for (auto i : s.test) CHECK(i >= 15);
  m.records[0].split = "";
  CHECK_THROWS_AS(resolve_splits(m, SplitSpec{}), FormatError);
  for (auto& r : m.records) r.split = "";
  const auto u = resolve_splits(m, SplitSpec{});
  CHECK(u.train.size() == 12);
  CHECK(u.val.size() == 4);
  CHECK(u.test.size() == 4);
}

TEST_CASE("subsample is stratified and nested") {
  std::vector<int> labels(100);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = i < 80 ? 0 : 1;
  std::vector<std::size_t> pool(100);
  for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
  const auto quarter = subsample(labels, pool, 0.25, 3);
  const auto half = subsample(labels, pool, 0.5, 3);
  REQUIRE(quarter);
  REQUIRE(half);
  CHECK(quarter->size() == 25);
  CHECK(std::count_if(quarter->begin(), quarter->end(), [&](std::size_t i) { return labels[i] == 1; }) == 5);
  CHECK(std::includes(half->begin(), half->end(), quarter->begin(), quarter->end()));
  CHECK(subsample(labels, pool, 1.0, 3)->size() == 100);
  CHECK_FALSE(subsample(labels, pool, 0.01, 3).has_value());
  CHECK_THROWS_AS(subsample(labels, pool, 0.0, 3), ConfigError);
}

TEST_CASE("linear probe") {
  SUBCASE("zero weights predict uniform probabilities") {
    auto p = LinearProbe::zeros(4, 3);
    std::mt19937_64 rng(1);
    const auto probs = predict(p, lsvt::testing::random_tensor({5, 4}, rng));
    for (double v : probs.values()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  }
  SUBCASE("hand weights") {
    LinearProbe p{Tensor<double>::from_rows({{1, 0}, {0, 1}}), Tensor<double>({2}, {0, std::log(2.0)}), 0, 2};
    const auto probs = predict(p, Tensor<double>::from_rows({{0, 0}, {std::log(2.0), 0}}));
    CHECK(probs.at(0, 1) == doctest::Approx(2.0 / 3.0));
    CHECK(probs.at(1, 0) == doctest::Approx(0.5));
    CHECK_THROWS_AS(predict(p, Tensor<double>::from_rows({{1, 2, 3}})), ShapeError);
  }
  SUBCASE("loss gradient matches central differences, with and without dropout") {
    std::mt19937_64 rng(4);
    const auto x = lsvt::testing::random_tensor({6, 4}, rng);
    const std::vector<int> y = {0, 1, 2, 0, 1, 2};
    for (double dropout : {0.0, 0.3}) {
      auto probe = LinearProbe::zeros(4, 3, dropout);
      probe.weight = lsvt::testing::random_tensor({4, 3}, rng, -1, 1, true);
      probe.bias = lsvt::testing::random_tensor({3}, rng, -1, 1, true);
      const auto r = finite_diff_check_params([&] { return probe_loss(probe, x, y, dropout, 11); },
                                              {probe.weight, probe.bias});
      CHECK(r.max_relative_error < 1e-6);
    }
  }
  SUBCASE("inverted dropout keeps the expected input scale") {
    auto probe = LinearProbe::zeros(200, 2, 0.5);
    probe.weight = Tensor<double>::full({200, 2}, 0.0);
    // With one weight column of ones the logit difference is the sum of masked inputs.
    auto w = probe.weight.mutable_data();
    for (std::size_t i = 0; i < 200; ++i) w[i * 2 + 1] = 1.0 / 200;
    const auto x = Tensor<double>::full({400, 200}, 1.0);
    std::vector<int> y(400, 1);
    const double plain = probe_loss(probe, x, y, 0.0, 0).item();
    const double dropped = probe_loss(probe, x, y, 0.5, 5).item();
    CHECK(std::abs(plain - dropped) < 0.02);
    CHECK_THROWS_AS(probe_loss(probe, x, y, 1.0, 5), DomainError);
  }
  SUBCASE("separable data is fit within 200 epochs and the earliest best epoch is kept") {
    std::mt19937_64 rng(8);
    FeatureSet train{lsvt::testing::random_tensor({40, 3}, rng), {}};
    FeatureSet val{lsvt::testing::random_tensor({20, 3}, rng), {}};
    for (std::size_t i = 0; i < 40; ++i) train.labels.push_back(train.x.at(i, 0) + 0.5 * train.x.at(i, 1) > 0);
    for (std::size_t i = 0; i < 20; ++i) val.labels.push_back(val.x.at(i, 0) + 0.5 * val.x.at(i, 1) > 0);
    ProbeHyper hyper;
    const auto r = train_probe(train, val, 2, 0.0, hyper);
    CHECK(macro_metrics(predict(r.final_probe, train.x), train.labels).accuracy == 1.0);
    CHECK(macro_metrics(predict(r.probe, train.x), train.labels).auc == 1.0);
    CHECK(r.best_val_auc == 1.0);
    CHECK(r.val_auc_history.size() == hyper.epochs);
    CHECK(r.val_auc_history[r.best_epoch - 1] == r.best_val_auc);
    for (std::size_t e = 0; e + 1 < r.best_epoch; ++e) CHECK(r.val_auc_history[e] < r.best_val_auc);
  }
}

TEST_CASE("features and end-to-end probing") {
  ViTModel<float> model(small_model(), 3);
  auto images = random_images(8, 16, 12);
  SUBCASE("features are deterministic and duplicated images give identical rows") {
    images[5] = images[2];
    const auto a = extract_features(model, images, 3);
    const auto b = extract_features(model, images, 64);
    CHECK(a.values() == b.values());
    for (std::size_t c = 0; c < a.cols(); ++c) CHECK(a.at(5, c) == a.at(2, c));
    CHECK_THROWS_AS(extract_features(model, {}), ContractError);
  }
  SUBCASE("frozen backbone is untouched and end-to-end works on a copy") {
    std::vector<std::vector<float>> before;
    for (auto& [name, t] : model.named_parameters()) before.push_back(t.values());
    const std::vector<int> labels = {0, 1, 0, 1, 0, 1, 0, 1};
    ProbeHyper hyper;
    hyper.epochs = 20;
    hyper.e2e_epochs = 2;
    const auto r = train_probe_end_to_end(model, images, labels, images, labels, 2, 0.1, hyper);
    REQUIRE(r.backbone.has_value());
    CHECK(r.val_auc_history.size() == 3);
    std::size_t i = 0;
    for (auto& [name, t] : model.named_parameters()) CHECK(t.values() == before[i++]);
  }
}

TEST_CASE("ablation sweep covers every cell and reports are byte-stable") {
  ViTModel<float> model(small_model(), 4);
  ProbeData data;
  data.classes = 2;
  data.train_images = random_images(20, 16, 1);
  data.val_images = random_images(6, 16, 2);
  data.test_images = random_images(6, 16, 3);
  for (std::size_t i = 0; i < 20; ++i) data.train_labels.push_back(static_cast<int>(i % 2));
  data.val_labels = data.test_labels = {0, 1, 0, 1, 0, 1};
  AblationGrid grid;
  grid.modes = {ProbeMode::frozen};
  ProbeHyper hyper;
  hyper.epochs = 10;
  const auto cells = ablation_sweep(model, data, grid, hyper);
  CHECK(cells.size() == grid.fractions.size() * grid.dropouts.size());
  // 6.5% of 10 per class rounds to 1, so every cell runs.
  for (const auto& c : cells) CHECK_FALSE(c.skipped);

  const auto dir = fs::temp_directory_path() / "lsvt_test_probe";
  fs::create_directories(dir);
  write_ablation_csv(cells, dir / "a.csv");
  write_ablation_csv(cells, dir / "b.csv");
  const auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  const auto text = slurp(dir / "a.csv");
  CHECK(text == slurp(dir / "b.csv"));
  CHECK(text.rfind("fraction,dropout,mode,status,n_train,auc,accuracy,f1\n", 0) == 0);
  CHECK(text.find('\r') == std::string::npos);
  CHECK(format_number(0.5) == "0.500000");
  CHECK(format_number(NAN) == "nan");
  fs::remove_all(dir);
}
