#include "lsvt/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace lsvt {

namespace {

template <typename T>
using NodePtr = std::shared_ptr<detail::Node<T>>;

template <typename T>
using NodeRef = const detail::Node<T>&;

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
}

template <typename T>
void require_matrix(const Tensor<T>& a, const char* op) {
  if (a.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected 2-D tensor, got " + to_string(a.shape()));
  }
}

// c[m×n] += a[m×k] · b[k×n]; i-p-j order keeps the inner loop contiguous.
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    const T* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      if (av == T{0}) continue;
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[k×n] += a[m×k]ᵀ · b[m×n]
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    const T* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      if (av == T{0}) continue;
      T* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
std::vector<T> transposed(const std::vector<T>& src, std::size_t rows, std::size_t cols) {
  std::vector<T> out(src.size());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = src[r * cols + c];
  }
  return out;
}

template <typename T>
std::size_t last_dim(const Tensor<T>& x) {
  return x.shape().back();
}

template <typename T>
void check_temperature(T temperature) {
  if (!(temperature > T{0})) {
    throw DomainError("softmax temperature must be > 0, got " + std::to_string(temperature));
  }
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw ShapeError("matmul: inner dimensions disagree, " + to_string(a.shape()) + " x " +
                     to_string(b.shape()));
  }
  std::vector<T> c(m * n, T{0});
  gemm_nn(a.data().data(), b.data().data(), c.data(), m, k, n);
  NodePtr<T> an = a.node(), bn = b.node();
  return make_result<T>({m, n}, std::move(c), {an, bn}, "matmul",
                        [an = an.get(), bn = bn.get(), m, k, n](NodeRef<T> out) {
                          if (an->requires_grad) {
                            std::vector<T> da(m * k, T{0});
                            const auto bt = transposed(bn->data, k, n);
                            gemm_nn(out.grad.data(), bt.data(), da.data(), m, n, k);
                            an->accumulate(da);
                          }
                          if (bn->requires_grad) {
                            std::vector<T> db(k * n, T{0});
                            gemm_tn(an->data.data(), out.grad.data(), db.data(), m, k, n);
                            bn->accumulate(db);
                          }
                        });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  require_matrix(a, "transpose");
  const std::size_t r = a.rows(), c = a.cols();
  NodePtr<T> an = a.node();
  return make_result<T>({c, r}, transposed(a.values(), r, c), {an}, "transpose",
                        [an = an.get(), r, c](NodeRef<T> out) {
                          an->accumulate(transposed(out.grad, c, r));
                        });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + b.at(i);
  NodePtr<T> an = a.node(), bn = b.node();
  return make_result<T>(a.shape(), std::move(out), {an, bn}, "add",
                        [an = an.get(), bn = bn.get()](NodeRef<T> o) {
                          an->accumulate(o.grad);
                          bn->accumulate(o.grad);
                        });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "sub");
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) - b.at(i);
  NodePtr<T> an = a.node(), bn = b.node();
  return make_result<T>(a.shape(), std::move(out), {an, bn}, "sub",
                        [an = an.get(), bn = bn.get()](NodeRef<T> o) {
                          an->accumulate(o.grad);
                          if (bn->requires_grad) {
                            std::vector<T> g(o.grad.size());
                            for (std::size_t i = 0; i < g.size(); ++i) g[i] = -o.grad[i];
                            bn->accumulate(g);
                          }
                        });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * b.at(i);
  NodePtr<T> an = a.node(), bn = b.node();
  return make_result<T>(a.shape(), std::move(out), {an, bn}, "mul",
                        [an = an.get(), bn = bn.get()](NodeRef<T> o) {
                          const auto n = o.grad.size();
                          if (an->requires_grad) {
                            std::vector<T> g(n);
                            for (std::size_t i = 0; i < n; ++i) g[i] = o.grad[i] * bn->data[i];
                            an->accumulate(g);
                          }
                          if (bn->requires_grad) {
                            std::vector<T> g(n);
                            for (std::size_t i = 0; i < n; ++i) g[i] = o.grad[i] * an->data[i];
                            bn->accumulate(g);
                          }
                        });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * factor;
  NodePtr<T> an = a.node();
  return make_result<T>(a.shape(), std::move(out), {an}, "scale",
                        [an = an.get(), factor](NodeRef<T> o) {
                          std::vector<T> g(o.grad.size());
                          for (std::size_t i = 0; i < g.size(); ++i) g[i] = o.grad[i] * factor;
                          an->accumulate(g);
                        });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T value) {
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + value;
  NodePtr<T> an = a.node();
  return make_result<T>(a.shape(), std::move(out), {an}, "add_scalar",
                        [an = an.get()](NodeRef<T> o) { an->accumulate(o.grad); });
}

template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  const std::size_t d = last_dim(x);
  if (bias.size() != d) {
    throw ShapeError("add_bias: bias " + to_string(bias.shape()) + " does not match last axis of " +
                     to_string(x.shape()));
  }
  std::vector<T> out(x.values());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bias.at(i % d);
  NodePtr<T> xn = x.node(), bn = bias.node();
  return make_result<T>(x.shape(), std::move(out), {xn, bn}, "add_bias",
                        [xn = xn.get(), bn = bn.get(), d](NodeRef<T> o) {
                          xn->accumulate(o.grad);
                          if (bn->requires_grad) {
                            std::vector<T> g(d, T{0});
                            for (std::size_t i = 0; i < o.grad.size(); ++i) g[i % d] += o.grad[i];
                            bn->accumulate(g);
                          }
                        });
}

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x, T temperature) {
  check_temperature(temperature);
  const std::size_t n = last_dim(x);
  const std::size_t rows = x.size() / n;
  std::vector<T> y(x.size());
  const auto& xs = x.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = xs.data() + r * n;
    T* out = y.data() + r * n;
    const T mx = *std::max_element(in, in + n);
    if (!std::isfinite(mx)) throw DomainError("softmax_rows: row " + std::to_string(r) + " has no finite maximum");
    T total{0};
    for (std::size_t j = 0; j < n; ++j) {
      out[j] = std::exp((in[j] - mx) / temperature);
      total += out[j];
    }
    for (std::size_t j = 0; j < n; ++j) out[j] /= total;
  }
  NodePtr<T> xn = x.node();
  return make_result<T>(x.shape(), std::move(y), {xn}, "softmax_rows",
                        [xn = xn.get(), n, rows, temperature](NodeRef<T> o) {
                          std::vector<T> g(o.data.size());
                          for (std::size_t r = 0; r < rows; ++r) {
                            const T* yr = o.data.data() + r * n;
                            const T* gr = o.grad.data() + r * n;
                            T dot{0};
                            for (std::size_t j = 0; j < n; ++j) dot += gr[j] * yr[j];
                            for (std::size_t j = 0; j < n; ++j) {
                              g[r * n + j] = yr[j] * (gr[j] - dot) / temperature;
                            }
                          }
                          xn->accumulate(g);
                        });
}

template <typename T>
Tensor<T> normalize_rows(const Tensor<T>& x, T eps) {
  if (!(eps > T{0})) throw ContractError("normalize_rows: eps must be positive");
  const std::size_t n = last_dim(x);
  const std::size_t rows = x.size() / n;
  std::vector<T> y(x.size());
  std::vector<T> norms(rows);
  const auto& xs = x.values();
  for (std::size_t r = 0; r < rows; ++r) {
    T ss = eps;
    for (std::size_t j = 0; j < n; ++j) ss += xs[r * n + j] * xs[r * n + j];
    norms[r] = std::sqrt(ss);
    for (std::size_t j = 0; j < n; ++j) y[r * n + j] = xs[r * n + j] / norms[r];
  }
  NodePtr<T> xn = x.node();
  return make_result<T>(x.shape(), std::move(y), {xn}, "normalize_rows",
                        [xn = xn.get(), n, rows, norms = std::move(norms)](NodeRef<T> o) {
                          std::vector<T> g(o.data.size());
                          for (std::size_t r = 0; r < rows; ++r) {
                            const T* yr = o.data.data() + r * n;
                            const T* gr = o.grad.data() + r * n;
                            T dot{0};
                            for (std::size_t j = 0; j < n; ++j) dot += gr[j] * yr[j];
                            for (std::size_t j = 0; j < n; ++j) g[r * n + j] = (gr[j] - yr[j] * dot) / norms[r];
                          }
                          xn->accumulate(g);
                        });
}

template <typename T>
Tensor<T> log_softmax_rows(const Tensor<T>& x, T temperature) {
  check_temperature(temperature);
  const std::size_t n = last_dim(x);
  const std::size_t rows = x.size() / n;
  std::vector<T> y(x.size());
  const auto& xs = x.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = xs.data() + r * n;
    T* out = y.data() + r * n;
    const T mx = *std::max_element(in, in + n);
    if (!std::isfinite(mx)) throw DomainError("log_softmax_rows: row " + std::to_string(r) + " has no finite maximum");
    T total{0};
    for (std::size_t j = 0; j < n; ++j) total += std::exp((in[j] - mx) / temperature);
    const T log_total = std::log(total);
    for (std::size_t j = 0; j < n; ++j) out[j] = (in[j] - mx) / temperature - log_total;
  }
  NodePtr<T> xn = x.node();
  return make_result<T>(x.shape(), std::move(y), {xn}, "log_softmax_rows",
                        [xn = xn.get(), n, rows, temperature](NodeRef<T> o) {
                          std::vector<T> g(o.data.size());
                          for (std::size_t r = 0; r < rows; ++r) {
                            const T* yr = o.data.data() + r * n;
                            const T* gr = o.grad.data() + r * n;
                            T total{0};
                            for (std::size_t j = 0; j < n; ++j) total += gr[j];
                            for (std::size_t j = 0; j < n; ++j) {
                              g[r * n + j] = (gr[j] - std::exp(yr[j]) * total) / temperature;
                            }
                          }
                          xn->accumulate(g);
                        });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps) {
  if (!(eps > T{0})) throw DomainError("layer_norm: eps must be > 0");
  const std::size_t d = last_dim(x);
  if (gain.size() != d || bias.size() != d) {
    throw ShapeError("layer_norm: gain/bias " + to_string(gain.shape()) + "/" +
                     to_string(bias.shape()) + " do not match last axis of " + to_string(x.shape()));
  }
  const std::size_t rows = x.size() / d;
  std::vector<T> xhat(x.size()), inv_std(rows), y(x.size());
  const auto& xs = x.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = xs.data() + r * d;
    T mu{0};
    for (std::size_t j = 0; j < d; ++j) mu += in[j];
    mu /= static_cast<T>(d);
    T var{0};
    for (std::size_t j = 0; j < d; ++j) var += (in[j] - mu) * (in[j] - mu);
    var /= static_cast<T>(d);
    inv_std[r] = T{1} / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[r * d + j] = (in[j] - mu) * inv_std[r];
      y[r * d + j] = xhat[r * d + j] * gain.at(j) + bias.at(j);
    }
  }
  NodePtr<T> xn = x.node(), gn = gain.node(), bn = bias.node();
  return make_result<T>(
      x.shape(), std::move(y), {xn, gn, bn}, "layer_norm",
      [xn = xn.get(), gn = gn.get(), bn = bn.get(), xhat = std::move(xhat),
       inv_std = std::move(inv_std), d, rows](NodeRef<T> o) {
        if (xn->requires_grad) {
          std::vector<T> g(o.grad.size());
          std::vector<T> dxhat(d);
          for (std::size_t r = 0; r < rows; ++r) {
            T mean_dxhat{0}, mean_dxhat_xhat{0};
            for (std::size_t j = 0; j < d; ++j) {
              dxhat[j] = o.grad[r * d + j] * gn->data[j];
              mean_dxhat += dxhat[j];
              mean_dxhat_xhat += dxhat[j] * xhat[r * d + j];
            }
            mean_dxhat /= static_cast<T>(d);
            mean_dxhat_xhat /= static_cast<T>(d);
            for (std::size_t j = 0; j < d; ++j) {
              g[r * d + j] = inv_std[r] * (dxhat[j] - mean_dxhat - xhat[r * d + j] * mean_dxhat_xhat);
            }
          }
          xn->accumulate(g);
        }
        if (gn->requires_grad || bn->requires_grad) {
          std::vector<T> dg(d, T{0}), db(d, T{0});
          for (std::size_t i = 0; i < o.grad.size(); ++i) {
            dg[i % d] += o.grad[i] * xhat[i];
            db[i % d] += o.grad[i];
          }
          gn->accumulate(dg);
          bn->accumulate(db);
        }
      });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  const T c = static_cast<T>(std::sqrt(2.0 / std::numbers::pi));
  const T a = static_cast<T>(0.044715);
  std::vector<T> y(x.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const T v = x.at(i);
    y[i] = T{0.5} * v * (T{1} + std::tanh(c * (v + a * v * v * v)));
  }
  NodePtr<T> xn = x.node();
  return make_result<T>(x.shape(), std::move(y), {xn}, "gelu", [xn = xn.get(), c, a](NodeRef<T> o) {
    std::vector<T> g(o.grad.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T v = xn->data[i];
      const T t = std::tanh(c * (v + a * v * v * v));
      const T dt = (T{1} - t * t) * c * (T{1} + T{3} * a * v * v);
      g[i] = o.grad[i] * (T{0.5} * (T{1} + t) + T{0.5} * v * dt);
    }
    xn->accumulate(g);
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T total{0};
  for (auto v : x.data()) total += v;
  NodePtr<T> xn = x.node();
  return make_result<T>({1}, {total}, {xn}, "sum", [xn = xn.get()](NodeRef<T> o) {
    xn->accumulate(std::vector<T>(xn->data.size(), o.grad[0]));
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T{1} / static_cast<T>(x.size()));
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw ShapeError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  }
  NodePtr<T> xn = x.node();
  return make_result<T>(std::move(shape), x.values(), {xn}, "reshape",
                        [xn = xn.get()](NodeRef<T> o) { xn->accumulate(o.grad); });
}

template <typename T>
Tensor<T> slice_rows(const Tensor<T>& x, std::size_t begin, std::size_t count) {
  require_matrix(x, "slice_rows");
  const std::size_t cols = x.cols();
  if (count == 0 || begin + count > x.rows()) {
    throw ShapeError("slice_rows: rows [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") out of range for " + to_string(x.shape()));
  }
  const auto first = x.values().begin() + static_cast<std::ptrdiff_t>(begin * cols);
  std::vector<T> out(first, first + static_cast<std::ptrdiff_t>(count * cols));
  NodePtr<T> xn = x.node();
  return make_result<T>({count, cols}, std::move(out), {xn}, "slice_rows",
                        [xn = xn.get(), begin, cols](NodeRef<T> o) {
                          std::vector<T> g(xn->data.size(), T{0});
                          std::copy(o.grad.begin(), o.grad.end(),
                                    g.begin() + static_cast<std::ptrdiff_t>(begin * cols));
                          xn->accumulate(g);
                        });
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, const std::vector<std::size_t>& rows) {
  require_matrix(x, "gather_rows");
  const std::size_t cols = x.cols();
  if (rows.empty()) throw ShapeError("gather_rows: empty index list");
  std::vector<T> out;
  out.reserve(rows.size() * cols);
  for (auto r : rows) {
    if (r >= x.rows()) throw ShapeError("gather_rows: row index out of range");
    const auto first = x.values().begin() + static_cast<std::ptrdiff_t>(r * cols);
    out.insert(out.end(), first, first + static_cast<std::ptrdiff_t>(cols));
  }
  NodePtr<T> xn = x.node();
  return make_result<T>({rows.size(), cols}, std::move(out), {xn}, "gather_rows",
                        [xn = xn.get(), rows, cols](NodeRef<T> o) {
                          std::vector<T> g(xn->data.size(), T{0});
                          for (std::size_t i = 0; i < rows.size(); ++i) {
                            for (std::size_t c = 0; c < cols; ++c) g[rows[i] * cols + c] += o.grad[i * cols + c];
                          }
                          xn->accumulate(g);
                        });
}

template <typename T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t cols = parts.front().cols();
  std::size_t total_rows = 0;
  std::vector<NodePtr<T>> nodes;
  std::vector<T> out;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw ShapeError("concat_rows: column counts differ");
    total_rows += p.rows();
    nodes.push_back(p.node());
    out.insert(out.end(), p.values().begin(), p.values().end());
  }
  std::vector<detail::Node<T>*> raw;
  for (auto& n : nodes) raw.push_back(n.get());
  return make_result<T>({total_rows, cols}, std::move(out), std::move(nodes), "concat_rows",
                        [raw = std::move(raw)](NodeRef<T> o) {
                          std::size_t offset = 0;
                          for (auto* n : raw) {
                            const auto len = n->data.size();
                            if (n->requires_grad) {
                              n->accumulate(std::span<const T>(o.grad.data() + offset, len));
                            }
                            offset += len;
                          }
                        });
}

template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t rows = parts.front().rows();
  std::size_t total_cols = 0;
  std::vector<NodePtr<T>> nodes;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw ShapeError("concat_cols: row counts differ");
    total_cols += p.cols();
    widths.push_back(p.cols());
    nodes.push_back(p.node());
  }
  std::vector<T> out(rows * total_cols);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const auto w = p.cols();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(p.values().begin() + static_cast<std::ptrdiff_t>(r * w), w,
                  out.begin() + static_cast<std::ptrdiff_t>(r * total_cols + offset));
    }
    offset += w;
  }
  std::vector<detail::Node<T>*> raw;
  for (auto& n : nodes) raw.push_back(n.get());
  return make_result<T>({rows, total_cols}, std::move(out), std::move(nodes), "concat_cols",
                        [raw = std::move(raw), widths = std::move(widths), rows, total_cols](NodeRef<T> o) {
                          std::size_t off = 0;
                          for (std::size_t i = 0; i < raw.size(); ++i) {
                            const auto w = widths[i];
                            if (raw[i]->requires_grad) {
                              std::vector<T> g(rows * w);
                              for (std::size_t r = 0; r < rows; ++r) {
                                std::copy_n(o.grad.begin() + static_cast<std::ptrdiff_t>(r * total_cols + off), w,
                                            g.begin() + static_cast<std::ptrdiff_t>(r * w));
                              }
                              raw[i]->accumulate(g);
                            }
                            off += w;
                          }
                        });
}

template <typename T>
Tensor<T> soft_cross_entropy(const Tensor<T>& target, const Tensor<T>& log_probs) {
  require_same_shape(target, log_probs, "soft_cross_entropy");
  const std::size_t n = last_dim(log_probs);
  const std::size_t rows = log_probs.size() / n;
  T total{0};
  for (std::size_t i = 0; i < log_probs.size(); ++i) total -= target.at(i) * log_probs.at(i);
  total /= static_cast<T>(rows);
  NodePtr<T> ln = log_probs.node();
  auto t = target.values();
  return make_result<T>({1}, {total}, {ln}, "soft_cross_entropy",
                        [ln = ln.get(), t = std::move(t), rows](NodeRef<T> o) {
                          std::vector<T> g(t.size());
                          const T f = -o.grad[0] / static_cast<T>(rows);
                          for (std::size_t i = 0; i < g.size(); ++i) g[i] = f * t[i];
                          ln->accumulate(g);
                        });
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels) {
  require_matrix(logits, "cross_entropy");
  const std::size_t rows = logits.rows(), n = logits.cols();
  if (labels.size() != rows) throw ShapeError("cross_entropy: label count does not match rows");
  std::vector<T> onehot(rows * n, T{0});
  for (std::size_t r = 0; r < rows; ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= n) {
      throw DomainError("cross_entropy: label " + std::to_string(labels[r]) + " out of range");
    }
    onehot[r * n + static_cast<std::size_t>(labels[r])] = T{1};
  }
  return soft_cross_entropy(Tensor<T>({rows, n}, std::move(onehot)), log_softmax_rows(logits, T{1}));
}

#define LSVT_INSTANTIATE_OPS(T)                                                                 \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> transpose(const Tensor<T>&);                                              \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> scale(const Tensor<T>&, T);                                               \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                          \
  template Tensor<T> add_bias(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> softmax_rows(const Tensor<T>&, T);                                        \
  template Tensor<T> log_softmax_rows(const Tensor<T>&, T);                                    \
  template Tensor<T> normalize_rows(const Tensor<T>&, T);                                      \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);      \
  template Tensor<T> gelu(const Tensor<T>&);                                                   \
  template Tensor<T> sum(const Tensor<T>&);                                                    \
  template Tensor<T> mean(const Tensor<T>&);                                                   \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                         \
  template Tensor<T> slice_rows(const Tensor<T>&, std::size_t, std::size_t);                   \
  template Tensor<T> gather_rows(const Tensor<T>&, const std::vector<std::size_t>&);           \
  template Tensor<T> concat_rows(const std::vector<Tensor<T>>&);                               \
  template Tensor<T> concat_cols(const std::vector<Tensor<T>>&);                               \
  template Tensor<T> soft_cross_entropy(const Tensor<T>&, const Tensor<T>&);                   \
  template Tensor<T> cross_entropy(const Tensor<T>&, const std::vector<int>&);

LSVT_INSTANTIATE_OPS(float)
LSVT_INSTANTIATE_OPS(double)

#undef LSVT_INSTANTIATE_OPS

}  // namespace lsvt
