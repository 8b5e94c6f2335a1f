#pragma once

#include <cstddef>
#include <vector>

#include "lsvt/tensor.hpp"

namespace lsvt {

// c = a·b for a: m×k, b: k×n.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> transpose(const Tensor<T>& a);

// Pointwise ops over equal shapes.
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor);
template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T value);

// x[..., j] + bias[j] over the last axis.
template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias);

// Row-wise softmax over the last axis of exp(x/temperature), max-subtracted.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x, T temperature = T{1});
// Row-wise log-softmax of x/temperature over the last axis.
template <typename T>
Tensor<T> log_softmax_rows(const Tensor<T>& x, T temperature = T{1});

// x / sqrt(Σx² + eps) over the last axis.
template <typename T>
Tensor<T> normalize_rows(const Tensor<T>& x, T eps = T{1e-12});

// (x - mean)/sqrt(var + eps) * gain + bias over the last axis (biased variance).
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps);

// Tanh-approximated GELU: 0.5·x·(1 + tanh(√(2/π)·(x + 0.044715·x³))).
template <typename T>
Tensor<T> gelu(const Tensor<T>& x);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);
template <typename T>
Tensor<T> mean(const Tensor<T>& x);

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

// Rows [begin, begin+count) of a 2-D tensor.
template <typename T>
Tensor<T> slice_rows(const Tensor<T>& x, std::size_t begin, std::size_t count);
// Rows picked by index (duplicates allowed).
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, const std::vector<std::size_t>& rows);
template <typename T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts);
template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts);

// Mean over rows of -Σ_k target[r][k]·log_probs[r][k]. `target` is treated as constant.
template <typename T>
Tensor<T> soft_cross_entropy(const Tensor<T>& target, const Tensor<T>& log_probs);

// Mean multinomial cross-entropy of integer labels under row-wise softmax(logits).
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels);

}  // namespace lsvt
