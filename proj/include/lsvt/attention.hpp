#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "lsvt/tensor.hpp"

namespace lsvt {

// Per-head projections W_Q[i], W_K[i]: d_model×d_k and W_V[i]: d_model×d_v, plus the output
// projection W_O: (heads·d_v)×d_model with bias. Q/K/V projections carry no bias.
template <typename T>
struct AttentionParams {
  std::size_t heads = 1;
  std::size_t d_model = 1;
  std::size_t d_k = 1;
  std::size_t d_v = 1;
  std::vector<Tensor<T>> w_q, w_k, w_v;
  Tensor<T> w_o;
  Tensor<T> b_o;

  // Throws ShapeError when any tensor disagrees with the declared dimensions.
  void validate() const;

  // Weights ~ N(0, init_std²), output bias zero; all tensors require grad.
  static AttentionParams random(std::size_t heads, std::size_t d_model, std::size_t d_k,
                                std::size_t d_v, std::mt19937_64& rng, double init_std = 0.02);
};

template <typename T>
struct AttentionResult {
  Tensor<T> output;   // m×d_v
  Tensor<T> weights;  // m×n, row-stochastic
};

// softmax(q·kᵀ/√d_k)·v.
template <typename T>
AttentionResult<T> scaled_dot_product_attention(const Tensor<T>& q, const Tensor<T>& k,
                                                 const Tensor<T>& v);

// concat(head_1..head_h)·W_O + b_O with head_i = attention(x_q·W_Q[i], x_kv·W_K[i], x_kv·W_V[i]).
// When `head_weights` is given it receives the h attention matrices (m×n each).
template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& x_q, const Tensor<T>& x_kv,
                               const AttentionParams<T>& params,
                               std::vector<Tensor<T>>* head_weights = nullptr);

}  // namespace lsvt
