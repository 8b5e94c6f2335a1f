#include <cmath>
#include <random>

#include "doctest.h"
#include "lsvt/gradcheck.hpp"
#include "lsvt/ops.hpp"
#include "test_util.hpp"

using namespace lsvt;
using lsvt::testing::max_abs_diff;
using lsvt::testing::naive_matmul;
using lsvt::testing::random_tensor;

TEST_CASE("tensor invariants") {
  CHECK_THROWS_AS(TensorD({2, 3}, std::vector<double>(5)), ShapeError);
  CHECK_THROWS_AS(TensorD({0, 3}, {}), ShapeError);
  TensorD t({2, 3}, std::vector<double>(6, 1.0));
  CHECK(t.size() == numel(t.shape()));
  CHECK_FALSE(t.has_grad());
}

TEST_CASE("matmul examples") {
  auto eye = TensorD::from_rows({{1, 0}, {0, 1}});
  auto m = TensorD::from_rows({{1, 2}, {3, 4}});
  CHECK(matmul(eye, m).values() == m.values());
  CHECK(matmul(TensorD::from_rows({{1, 0}}), eye).values() == std::vector<double>{1, 0});
  auto expected = naive_matmul({1, 2, 3, 4}, {5, 6, 7, 8}, 2, 2, 2);
  CHECK(expected == std::vector<double>{19, 22, 43, 50});
  CHECK(matmul(m, TensorD::from_rows({{5, 6}, {7, 8}})).values() == expected);
}

TEST_CASE("matmul shape error names both shapes") {
  auto a = TensorD::zeros({2, 3});
  auto b = TensorD::zeros({2, 3});
  try {
    (void)matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
  }
}

TEST_CASE("matmul agrees with triple loop for dims up to 8") {
  std::mt19937_64 rng(7);
  for (std::size_t m = 1; m <= 8; ++m)
    for (std::size_t k = 1; k <= 8; ++k)
      for (std::size_t n = 1; n <= 8; n += 3) {
        auto a = random_tensor({m, k}, rng);
        auto b = random_tensor({k, n}, rng);
        auto ref = naive_matmul(a.values(), b.values(), m, k, n);
        auto got = matmul(a, b).values();
        for (std::size_t i = 0; i < ref.size(); ++i) {
          CHECK(std::abs(got[i] - ref[i]) <= 1e-6 * std::max(1.0, std::abs(ref[i])));
        }
      }
}

TEST_CASE("elementwise examples") {
  CHECK(add(TensorD({2}, {1, 2}), TensorD({2}, {0, 0})).values() == std::vector<double>{1, 2});
  CHECK(scale(TensorD({2}, {2, 4}), 1.0 / std::sqrt(4.0)).values() == std::vector<double>{1, 2});
  CHECK(mul(TensorD({3}, {1, 2, 3}), TensorD({3}, {4, 5, 6})).values() ==
        std::vector<double>{4, 10, 18});
  CHECK_THROWS_AS(add(TensorD({2}, {1, 2}), TensorD({3}, {1, 2, 3})), ShapeError);
}

TEST_CASE("softmax examples") {
  auto u = softmax_rows(TensorD::from_rows({{0, 0}}), 1.0);
  CHECK(u.at(0) == doctest::Approx(0.5));
  const double e2 = std::exp(2.0);
  auto s = softmax_rows(TensorD::from_rows({{1, 0}}), 0.5);
  CHECK(std::abs(s.at(0) - e2 / (e2 + 1.0)) < 1e-12);
  CHECK(std::abs(s.at(0) - 0.8808) < 1e-4);
  CHECK(std::abs(s.at(1) - 0.1192) < 1e-4);
  auto big = softmax_rows(TensorD::from_rows({{1000, 999}}), 1.0);
  const double e1 = std::exp(1.0);
  CHECK(std::abs(big.at(0) - e1 / (e1 + 1.0)) < 1e-12);
  CHECK(std::abs(big.at(0) - 0.7311) < 1e-4);
  CHECK(std::abs(big.at(1) - 0.2689) < 1e-4);
}

TEST_CASE("softmax domain errors") {
  CHECK_THROWS_AS(softmax_rows(TensorD::from_rows({{1, 0}}), 0.0), DomainError);
  CHECK_THROWS_AS(softmax_rows(TensorD::from_rows({{1, 0}}), -1.0), DomainError);
  const double ninf = -std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(softmax_rows(TensorD::from_rows({{ninf, ninf}}), 1.0), DomainError);
  CHECK_THROWS_AS(log_softmax_rows(TensorD::from_rows({{1, 0}}), 0.0), DomainError);
}

TEST_CASE("softmax properties") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> shift(-50, 50);
  for (int trial = 0; trial < 100; ++trial) {
    auto x = random_tensor({3, 7}, rng, -5, 5);
    auto y = softmax_rows(x, 1.0);
    for (std::size_t r = 0; r < 3; ++r) {
      double total = 0;
      for (std::size_t c = 0; c < 7; ++c) total += y.at(r, c);
      CHECK(std::abs(total - 1.0) < 1e-6);
    }
    // shift invariance per row
    auto shifted = x.clone();
    auto d = shifted.mutable_data();
    for (std::size_t r = 0; r < 3; ++r) {
      const double c = shift(rng);
      for (std::size_t j = 0; j < 7; ++j) d[r * 7 + j] += c;
    }
    CHECK(max_abs_diff(softmax_rows(shifted, 1.0).values(), y.values()) < 1e-9);
    // lowering the temperature never lowers the row maximum
    double prev_max = 0;
    for (double tau : {4.0, 2.0, 1.0, 0.5, 0.1, 0.04}) {
      auto p = softmax_rows(slice_rows(x, 0, 1), tau);
      double mx = *std::max_element(p.values().begin(), p.values().end());
      CHECK(mx >= prev_max - 1e-12);
      prev_max = mx;
    }
  }
}

TEST_CASE("layer norm examples") {
  auto ones = TensorD({3}, {1, 1, 1});
  auto zeros = TensorD({3}, {0, 0, 0});
  auto y = layer_norm(TensorD({3}, {1, 1, 1}), ones, zeros, 1e-5);
  CHECK(max_abs_diff(y.values(), std::vector<double>{0, 0, 0}) == 0.0);
  auto y2 = layer_norm(TensorD({2}, {0, 2}), TensorD({2}, {1, 1}), TensorD({2}, {0, 0}), 1e-12);
  CHECK(max_abs_diff(y2.values(), std::vector<double>{-1, 1}) < 1e-9);
  auto y3 = layer_norm(TensorD({2}, {0, 2}), TensorD({2}, {0, 0}), TensorD({2}, {5, 5}), 1e-5);
  CHECK(y3.values() == std::vector<double>{5, 5});
  CHECK_THROWS_AS(layer_norm(TensorD({2}, {0, 2}), TensorD({2}, {1, 1}), TensorD({2}, {0, 0}), 0.0),
                  DomainError);
  CHECK_THROWS_AS(layer_norm(TensorD({2}, {0, 2}), ones, zeros, 1e-5), ShapeError);
}

TEST_CASE("gelu examples") {
  auto y = gelu(TensorD({3}, {0, 10, 1}));
  CHECK(y.at(0) == 0.0);
  CHECK(y.at(1) == doctest::Approx(10.0).epsilon(1e-6));
  const double c = std::sqrt(2.0 / M_PI);
  const double oracle = 0.5 * (1.0 + std::tanh(c * (1.0 + 0.044715)));
  CHECK(std::abs(y.at(2) - oracle) < 1e-12);
  CHECK(std::abs(y.at(2) - 0.8412) < 1e-4);
  // monotone on a grid
  std::vector<double> grid;
  for (double v = -0.75; v <= 6.0; v += 0.05) grid.push_back(v);
  auto g = gelu(TensorD({grid.size()}, grid));
  for (std::size_t i = 1; i < grid.size(); ++i) CHECK(g.at(i) > g.at(i - 1));
}

TEST_CASE("normalize rows examples") {
  auto y = normalize_rows(TensorD::from_rows({{3, 4}, {0, 2}}), 0.0 + 1e-300);
  CHECK(y.at(0, 0) == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(y.at(0, 1) == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(y.at(1, 1) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(normalize_rows(TensorD::from_rows({{1.0}}), 0.0), ContractError);
  auto z = normalize_rows(TensorD::from_rows({{0.0, 0.0}}));
  CHECK(z.at(0, 0) == 0.0);
}

TEST_CASE("backward examples") {
  auto w = TensorD({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  {
    Tape<double> tape;
    TapeScope<double> scope(tape);
    tape.backward(sum(w));
  }
  CHECK(w.grad() == std::vector<double>(6, 1.0));
  auto v = TensorD({2}, {1, 2}, true);
  {
    Tape<double> tape;
    TapeScope<double> scope(tape);
    tape.backward(sum(mul(v, v)));
  }
  CHECK(v.grad() == std::vector<double>{2, 4});
}

TEST_CASE("backward contract errors") {
  auto w = TensorD({2}, {1, 2}, true);
  Tape<double> tape;
  TapeScope<double> scope(tape);
  auto y = mul(w, w);
  CHECK_THROWS_AS(tape.backward(y), ContractError);  // non-scalar
  auto detached = sum(w).detach();
  CHECK_THROWS_AS(tape.backward(detached), ContractError);
  auto loss = sum(y);
  tape.backward(loss);
  CHECK_THROWS_AS(tape.backward(loss), ContractError);  // second pass without reset
  tape.reset();
  w.zero_grad();
  auto loss2 = sum(mul(w, w));
  tape.backward(loss2);
  CHECK(w.grad() == std::vector<double>{2, 4});
}

TEST_CASE("tape visits in reverse topological order") {
  auto w = TensorD({2}, {1, 2}, true);
  Tape<double> tape;
  TapeScope<double> scope(tape);
  auto a = scale(w, 2.0);
  auto b = gelu(a);
  auto c = sum(b);
  tape.backward(c);
  CHECK(tape.visit_log() == std::vector<std::string>{"sum", "gelu", "scale"});
}

TEST_CASE("constants never accumulate gradient") {
  auto w = TensorD({2}, {1, 2}, true);
  auto k = TensorD({2}, {3, 4}, false);
  Tape<double> tape;
  TapeScope<double> scope(tape);
  tape.backward(sum(mul(w, k)));
  CHECK_FALSE(k.has_grad());
  CHECK(w.grad() == std::vector<double>{3, 4});
}

TEST_CASE("no recording without an active tape") {
  auto w = TensorD({2}, {1, 2}, true);
  auto y = sum(w);
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("finite difference utility") {
  std::mt19937_64 rng(3);
  auto x = random_tensor({3, 4}, rng);
  auto lin = finite_diff_check([](const TensorD& t) { return sum(t); }, x);
  CHECK(lin.max_relative_error <= 1e-10);
  auto quad = finite_diff_check([](const TensorD& t) { return sum(mul(t, t)); }, x);
  CHECK(quad.max_relative_error < 1e-6);
  CHECK_THROWS_AS(finite_diff_check([](const TensorD& t) { return sum(t); }, x, 0.0), DomainError);
}

// Composite CE(softmax(Wx), target) and each differentiable op through a random-weighted sum.
TEST_CASE("gradients match central differences at 64-bit") {
  std::mt19937_64 rng(2024);
  auto weights = [&](Shape s) { return random_tensor(std::move(s), rng, 0.5, 1.5); };

  auto w_mat = random_tensor({3, 4}, rng);
  auto x_in = random_tensor({4, 2}, rng);
  auto ce = finite_diff_check(
      [&](const TensorD& w) { return cross_entropy(transpose(matmul(w, x_in)), {0, 2}); }, w_mat);
  CHECK(ce.max_relative_error < 1e-6);

  auto b = random_tensor({4, 3}, rng);
  auto wm = weights({3, 3});
  CHECK(finite_diff_check([&](const TensorD& a) { return sum(mul(matmul(a, b), wm)); },
                          random_tensor({3, 4}, rng))
            .max_relative_error < 1e-6);
  auto a_fixed = random_tensor({3, 4}, rng);
  CHECK(finite_diff_check([&](const TensorD& bb) { return sum(mul(matmul(a_fixed, bb), wm)); }, b)
            .max_relative_error < 1e-6);

  // Inputs scaled with tau keep x/tau in the unsaturated range where relative error is meaningful.
  auto ws = random_tensor({2, 5}, rng, -1.5, 1.5);
  for (double tau : {1.0, 0.5, 0.1}) {
    CHECK(finite_diff_check([&](const TensorD& x) { return sum(mul(softmax_rows(x, tau), ws)); },
                            random_tensor({2, 5}, rng, -2 * tau, 2 * tau))
              .max_relative_error < 1e-6);
    CHECK(finite_diff_check([&](const TensorD& x) { return sum(mul(log_softmax_rows(x, tau), ws)); },
                            random_tensor({2, 5}, rng, -2 * tau, 2 * tau))
              .max_relative_error < 1e-6);
  }

  auto gain = random_tensor({5}, rng, 0.5, 1.5);
  auto bias = random_tensor({5}, rng);
  CHECK(finite_diff_check([&](const TensorD& x) { return sum(mul(layer_norm(x, gain, bias, 1e-5), ws)); },
                          random_tensor({2, 5}, rng, -2, 2))
            .max_relative_error < 1e-6);
  auto xl = random_tensor({2, 5}, rng, -2, 2);
  CHECK(finite_diff_check([&](const TensorD& g) { return sum(mul(layer_norm(xl, g, bias, 1e-5), ws)); },
                          gain)
            .max_relative_error < 1e-6);

  CHECK(finite_diff_check([&](const TensorD& x) { return sum(mul(gelu(x), ws)); },
                          random_tensor({2, 5}, rng, -3, 3))
            .max_relative_error < 1e-6);

  CHECK(finite_diff_check([&](const TensorD& x) { return sum(mul(normalize_rows(x), ws)); },
                          random_tensor({2, 5}, rng, -2, 2))
            .max_relative_error < 1e-6);

  auto w46 = random_tensor({4, 6}, rng, 0.5, 1.5);
  auto parts = finite_diff_check(
      [&](const TensorD& x) {
        auto top = slice_rows(x, 0, 1);
        auto rest = gather_rows(x, {2, 1, 2});
        auto cat = concat_rows<double>({top, rest});
        auto wide = concat_cols<double>({cat, cat});
        return sum(mul(wide, w46));
      },
      random_tensor({3, 3}, rng));
  CHECK(parts.max_relative_error < 1e-6);
}
