#pragma once

#include <functional>

#include "lsvt/tensor.hpp"

namespace lsvt {

inline constexpr int kRidders = 0;

using ScalarFn = std::function<TensorD(const TensorD&)>;

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  std::vector<double> analytic;
  std::vector<double> numeric;
};

// Compares the tape gradient of scalar f at x with central differences of step h.
// Relative error per coordinate is |analytic - numeric| / max(|analytic|, 1e-8).
GradCheckResult finite_diff_check(const ScalarFn& f, const TensorD& x, double h = 1e-4);

// Multi-input variant: perturbs each listed leaf in turn. `f` must read the leaves it was
// given (they are mutated in place during the numeric sweep and restored afterwards).
// With coords_per_leaf > 0 only that many evenly spaced coordinates of each leaf are probed.
// stencil_points = 5 uses the fourth-order central stencil, for sharply curved losses where the
// three-point truncation and rounding errors cannot both be made small. kRidders extrapolates
// a shrinking sequence of central differences starting at step h; most accurate, ~20 evaluations.
GradCheckResult finite_diff_check_params(const std::function<TensorD()>& f,
                                         std::vector<TensorD> leaves, double h = 1e-4,
                                         std::size_t coords_per_leaf = 0, int stencil_points = 3);

}  // namespace lsvt
