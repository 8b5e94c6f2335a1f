#include "lsvt/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace lsvt {

namespace {

// Polynomial extrapolation of central differences to zero step, shrinking h by 1.4 each round;
// stops once the error estimate starts growing.
double ridders(const std::function<double(double)>& at, double h) {
  constexpr int kTable = 10;
  constexpr double kShrink = 1.4, kShrink2 = kShrink * kShrink, kSafe = 2.0;
  double a[kTable][kTable];
  a[0][0] = (at(h) - at(-h)) / (2.0 * h);
  double best = a[0][0], err = std::numeric_limits<double>::max();
  for (int i = 1; i < kTable; ++i) {
    h /= kShrink;
    a[0][i] = (at(h) - at(-h)) / (2.0 * h);
    double fac = kShrink2;
    for (int j = 1; j <= i; ++j) {
      a[j][i] = (a[j - 1][i] * fac - a[j - 1][i - 1]) / (fac - 1.0);
      fac *= kShrink2;
      const double e = std::max(std::abs(a[j][i] - a[j - 1][i]), std::abs(a[j][i] - a[j - 1][i - 1]));
      if (e <= err) {
        err = e;
        best = a[j][i];
      }
    }
    if (std::abs(a[i][i] - a[i - 1][i - 1]) >= kSafe * err) break;
  }
  return best;
}

}  // namespace

GradCheckResult finite_diff_check(const ScalarFn& f, const TensorD& x, double h) {
  TensorD leaf = x.clone();
  leaf.set_requires_grad(true);
  return finite_diff_check_params([&] { return f(leaf); }, {leaf}, h);
}

GradCheckResult finite_diff_check_params(const std::function<TensorD()>& f,
                                         std::vector<TensorD> leaves, double h,
                                         std::size_t coords_per_leaf, int stencil_points) {
  if (!(h > 0.0)) throw DomainError("finite_diff_check: step must be positive");
  if (stencil_points != 3 && stencil_points != 5 && stencil_points != kRidders)
    throw DomainError("finite_diff_check: stencil must have 3 or 5 points, or be kRidders");
  for (auto& leaf : leaves) {
    leaf.set_requires_grad(true);
    leaf.zero_grad();
  }
  GradCheckResult result;
  {
    Tape<double> tape;
    TapeScope<double> scope(tape);
    const TensorD loss = f();
    if (loss.size() != 1) throw ContractError("finite_diff_check: f must be scalar-valued");
    tape.backward(loss);
  }
  const auto probed = [coords_per_leaf](std::size_t size) {
    std::vector<std::size_t> idx;
    if (coords_per_leaf == 0 || coords_per_leaf >= size) {
      for (std::size_t i = 0; i < size; ++i) idx.push_back(i);
    } else {
      for (std::size_t j = 0; j < coords_per_leaf; ++j) idx.push_back(j * size / coords_per_leaf);
    }
    return idx;
  };
  for (const auto& leaf : leaves) {
    const auto g = leaf.grad();
    for (auto i : probed(g.size())) result.analytic.push_back(g[i]);
  }
  for (auto& leaf : leaves) {
    auto values = leaf.mutable_data();
    for (auto i : probed(values.size())) {
      const double saved = values[i];
      const auto at = [&](double offset) {
        values[i] = saved + offset;
        return f().item();
      };
      if (stencil_points == kRidders) {
        result.numeric.push_back(ridders(at, h));
        values[i] = saved;
        continue;
      }
      const double d1 = at(h) - at(-h);
      if (stencil_points == 3) {
        result.numeric.push_back(d1 / (2.0 * h));
      } else {
        const double d2 = at(2.0 * h) - at(-2.0 * h);
        result.numeric.push_back((8.0 * d1 - d2) / (12.0 * h));
      }
      values[i] = saved;
    }
  }
  for (std::size_t i = 0; i < result.analytic.size(); ++i) {
    const double a = result.analytic[i];
    const double err = std::abs(a - result.numeric[i]) / std::max(std::abs(a), 1e-8);
    if (err > result.max_relative_error) {
      result.max_relative_error = err;
      result.worst_index = i;
    }
  }
  for (auto& leaf : leaves) leaf.zero_grad();
  return result;
}

}  // namespace lsvt
