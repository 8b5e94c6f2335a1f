#pragma once

// Scalar-loop reference implementations kept independent of the library's tensor ops.

#include <cmath>
#include <vector>

namespace lsvt::oracle {

using Matrix = std::vector<std::vector<double>>;

inline Matrix to_matrix(const std::vector<double>& flat, std::size_t rows, std::size_t cols) {
  Matrix m(rows, std::vector<double>(cols));
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) m[r][c] = flat[r * cols + c];
  return m;
}

inline Matrix product(const Matrix& a, const Matrix& b) {
  Matrix c(a.size(), std::vector<double>(b.front().size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.front().size(); ++j)
      for (std::size_t p = 0; p < b.size(); ++p) c[i][j] += a[i][p] * b[p][j];
  return c;
}

struct Attention {
  Matrix weights;
  Matrix output;
};

// Alignment scores e_ij, scaling by 1/sqrt(d_k), row softmax, then weights times values.
inline Attention attention(const Matrix& q, const Matrix& k, const Matrix& v) {
  const std::size_t m = q.size(), n = k.size(), dk = q.front().size(), dv = v.front().size();
  Attention out;
  out.weights.assign(m, std::vector<double>(n));
  out.output.assign(m, std::vector<double>(dv, 0.0));
  for (std::size_t i = 0; i < m; ++i) {
    std::vector<double> e(n, 0.0);
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < dk; ++p) e[j] += q[i][p] * k[j][p];
    double denom = 0.0;
    for (std::size_t j = 0; j < n; ++j) denom += std::exp(e[j] / std::sqrt(static_cast<double>(dk)));
    for (std::size_t j = 0; j < n; ++j)
      out.weights[i][j] = std::exp(e[j] / std::sqrt(static_cast<double>(dk))) / denom;
    for (std::size_t c = 0; c < dv; ++c)
      for (std::size_t j = 0; j < n; ++j) out.output[i][c] += out.weights[i][j] * v[j][c];
  }
  return out;
}

// Per-head projections, attention, concatenation and the output projection with bias.
inline Matrix multi_head(const Matrix& xq, const Matrix& xkv, const std::vector<Matrix>& wq,
                         const std::vector<Matrix>& wk, const std::vector<Matrix>& wv,
                         const Matrix& wo, const std::vector<double>& bo) {
  Matrix joined(xq.size());
  for (std::size_t h = 0; h < wq.size(); ++h) {
    auto head = attention(product(xq, wq[h]), product(xkv, wk[h]), product(xkv, wv[h])).output;
    for (std::size_t r = 0; r < xq.size(); ++r)
      joined[r].insert(joined[r].end(), head[r].begin(), head[r].end());
  }
  auto out = product(joined, wo);
  for (auto& row : out)
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += bo[c];
  return out;
}

}  // namespace lsvt::oracle
