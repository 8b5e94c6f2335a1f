#include "lsvt/attention.hpp"

#include <cmath>

#include "lsvt/ops.hpp"

namespace lsvt {

namespace {

template <typename T>
void expect_shape(const Tensor<T>& t, const Shape& shape, const std::string& what) {
  if (t.shape() != shape) {
    throw ShapeError("attention params: " + what + " is " + to_string(t.shape()) + ", expected " +
                     to_string(shape));
  }
}

template <typename T>
Tensor<T> normal_tensor(Shape shape, std::mt19937_64& rng, double std_dev) {
  std::normal_distribution<double> dist(0.0, std_dev);
  std::vector<T> data(numel(shape));
  for (auto& v : data) v = static_cast<T>(dist(rng));
  return Tensor<T>(std::move(shape), std::move(data), true);
}

}  // namespace

template <typename T>
void AttentionParams<T>::validate() const {
  if (heads == 0 || d_k == 0 || d_v == 0 || d_model == 0) {
    throw ShapeError("attention params: heads, d_model, d_k, d_v must be >= 1");
  }
  if (w_q.size() != heads || w_k.size() != heads || w_v.size() != heads) {
    throw ShapeError("attention params: expected " + std::to_string(heads) + " per-head projections");
  }
  for (std::size_t i = 0; i < heads; ++i) {
    expect_shape(w_q[i], {d_model, d_k}, "W_Q[" + std::to_string(i) + "]");
    expect_shape(w_k[i], {d_model, d_k}, "W_K[" + std::to_string(i) + "]");
    expect_shape(w_v[i], {d_model, d_v}, "W_V[" + std::to_string(i) + "]");
  }
  expect_shape(w_o, {heads * d_v, d_model}, "W_O");
  expect_shape(b_o, {d_model}, "b_O");
}

template <typename T>
AttentionParams<T> AttentionParams<T>::random(std::size_t heads, std::size_t d_model,
                                              std::size_t d_k, std::size_t d_v,
                                              std::mt19937_64& rng, double init_std) {
  AttentionParams p;
  p.heads = heads;
  p.d_model = d_model;
  p.d_k = d_k;
  p.d_v = d_v;
  for (std::size_t i = 0; i < heads; ++i) {
    p.w_q.push_back(normal_tensor<T>({d_model, d_k}, rng, init_std));
    p.w_k.push_back(normal_tensor<T>({d_model, d_k}, rng, init_std));
    p.w_v.push_back(normal_tensor<T>({d_model, d_v}, rng, init_std));
  }
  p.w_o = normal_tensor<T>({heads * d_v, d_model}, rng, init_std);
  p.b_o = Tensor<T>::zeros({d_model}, true);
  return p;
}

template <typename T>
AttentionResult<T> scaled_dot_product_attention(const Tensor<T>& q, const Tensor<T>& k,
                                                 const Tensor<T>& v) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2) {
    throw ShapeError("attention: q, k, v must be 2-D");
  }
  if (q.cols() != k.cols()) {
    throw ShapeError("attention: q " + to_string(q.shape()) + " and k " + to_string(k.shape()) +
                     " disagree on d_k");
  }
  if (k.rows() != v.rows()) {
    throw ShapeError("attention: k " + to_string(k.shape()) + " and v " + to_string(v.shape()) +
                     " disagree on n");
  }
  const T inv_sqrt_dk = T{1} / std::sqrt(static_cast<T>(q.cols()));
  auto scores = scale(matmul(q, transpose(k)), inv_sqrt_dk);
  auto weights = softmax_rows(scores, T{1});
  auto output = matmul(weights, v);
  return {std::move(output), std::move(weights)};
}

template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& x_q, const Tensor<T>& x_kv,
                               const AttentionParams<T>& params,
                               std::vector<Tensor<T>>* head_weights) {
  params.validate();
  if (x_q.rank() != 2 || x_kv.rank() != 2 || x_q.cols() != params.d_model ||
      x_kv.cols() != params.d_model) {
    throw ShapeError("multi_head_attention: inputs " + to_string(x_q.shape()) + ", " +
                     to_string(x_kv.shape()) + " do not match d_model " +
                     std::to_string(params.d_model));
  }
  std::vector<Tensor<T>> heads;
  heads.reserve(params.heads);
  if (head_weights) head_weights->clear();
  for (std::size_t i = 0; i < params.heads; ++i) {
    auto r = scaled_dot_product_attention(matmul(x_q, params.w_q[i]), matmul(x_kv, params.w_k[i]),
                                          matmul(x_kv, params.w_v[i]));
    heads.push_back(std::move(r.output));
    if (head_weights) head_weights->push_back(std::move(r.weights));
  }
  auto joined = params.heads == 1 ? heads.front() : concat_cols(heads);
  return add_bias(matmul(joined, params.w_o), params.b_o);
}

template struct AttentionParams<float>;
template struct AttentionParams<double>;
template AttentionResult<float> scaled_dot_product_attention(const TensorF&, const TensorF&, const TensorF&);
template AttentionResult<double> scaled_dot_product_attention(const TensorD&, const TensorD&, const TensorD&);
template TensorF multi_head_attention(const TensorF&, const TensorF&, const AttentionParams<float>&,
                                      std::vector<TensorF>*);
template TensorD multi_head_attention(const TensorD&, const TensorD&, const AttentionParams<double>&,
                                      std::vector<TensorD>*);

}  // namespace lsvt
