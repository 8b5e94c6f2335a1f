#include "lsvt/tsne.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>

#include "lsvt/errors.hpp"
#include "lsvt/image_io.hpp"
#include "lsvt/probe.hpp"
#include "lsvt/rng.hpp"

namespace lsvt {

void TsneConfig::validate() const {
  if (!(perplexity >= 2.0)) throw ConfigError("tsne perplexity must be >= 2");
  if (!(learning_rate > 0.0)) throw ConfigError("tsne learning rate must be > 0");
  if (iterations == 0) throw ConfigError("tsne iterations must be >= 1");
  if (!(exaggeration >= 1.0)) throw ConfigError("tsne exaggeration must be >= 1");
  if (!(momentum_initial >= 0.0 && momentum_initial < 1.0 && momentum_final >= 0.0 && momentum_final < 1.0)) {
    throw ConfigError("tsne momentum must lie in [0, 1)");
  }
  if (!(init_std > 0.0)) throw ConfigError("tsne init_std must be > 0");
}

namespace {

std::vector<double> squared_distances(const Tensor<double>& x) {
  const std::size_t n = x.rows(), d = x.cols();
  const auto& v = x.values();
  std::vector<double> out(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = v[i * d + k] - v[j * d + k];
        s += diff * diff;
      }
      out[i * n + j] = out[j * n + i] = s;
    }
  }
  return out;
}

// Row i of the conditional distribution for precision beta; returns entropy in bits.
double conditional_row(const std::vector<double>& d2, std::size_t n, std::size_t i, double beta, double shift,
                       std::vector<double>& row) {
  double z = 0.0, weighted = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    if (j == i) {
      row[j] = 0.0;
      continue;
    }
    const double a = d2[i * n + j] - shift;
    row[j] = std::exp(-beta * a);
    z += row[j];
    weighted += a * row[j];
  }
  for (std::size_t j = 0; j < n; ++j) row[j] /= z;
  // H = log z + beta·E[a] (nats), converted to bits.
  return (std::log(z) + beta * weighted / z) / std::log(2.0);
}

}  // namespace

Affinities joint_affinities(const Tensor<double>& x, double perplexity) {
  if (x.rank() != 2) throw ShapeError("joint_affinities expects an N×d matrix");
  const std::size_t n = x.rows();
  Affinities out;
  out.n = n;
  out.p.assign(n * n, 0.0);
  if (n < 2) throw DomainError("joint_affinities needs at least two points");
  if (n == 2) {
    out.p[1] = out.p[2] = 0.5;
    out.beta = {0.0, 0.0};
    out.entropy_bits = {0.0, 0.0};
    return out;
  }
  if (!(perplexity >= 1.0) || perplexity >= static_cast<double>(n)) {
    throw ConfigError("perplexity must lie in [1, N); got " + std::to_string(perplexity) + " with N=" + std::to_string(n));
  }
  const auto d2 = squared_distances(x);
  const double target = std::log2(perplexity);
  std::vector<double> cond(n * n, 0.0), row(n);
  out.beta.assign(n, 1.0);
  out.entropy_bits.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double shift = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) shift = std::min(shift, d2[i * n + j]);
    // Entropy decreases monotonically in beta; bracket, then bisect (geometrically while unbounded).
    double lo = 0.0, hi = std::numeric_limits<double>::infinity(), beta = 1.0;
    double h = 0.0;
    bool ok = false;
    for (int it = 0; it < 500; ++it) {
      h = conditional_row(d2, n, i, beta, shift, row);
      if (std::abs(h - target) < kPerplexityToleranceBits) {
        ok = true;
        break;
      }
      if (h > target) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
      } else {
        hi = beta;
        beta = 0.5 * (beta + lo);
      }
    }
    if (!ok) {
      throw DomainError("perplexity search failed at point " + std::to_string(i) + " (entropy " + std::to_string(h) +
                        " bits, target " + std::to_string(target) + "); degenerate or duplicate input?");
    }
    out.beta[i] = beta;
    out.entropy_bits[i] = h;
    std::copy(row.begin(), row.end(), cond.begin() + static_cast<std::ptrdiff_t>(i * n));
  }
  const double denom = 2.0 * static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) out.p[i * n + j] = (cond[i * n + j] + cond[j * n + i]) / denom;
  return out;
}

TsneResult tsne_embed(const Tensor<double>& x, const TsneConfig& config) {
  config.validate();
  const auto aff = joint_affinities(x, config.perplexity);
  const std::size_t n = aff.n;
  const auto& P = aff.p;
  Rng rng(config.seed);
  std::vector<double> y(n * 2), update(n * 2, 0.0), gains(n * 2, 1.0), grad(n * 2), num(n * n);
  for (auto& v : y) v = config.init_std * standard_normal(rng);
  TsneResult result;
  result.kl_history.reserve(config.iterations);
  constexpr double kTiny = 1e-12;
  for (std::size_t it = 0; it < config.iterations; ++it) {
    const bool early = it < config.exaggeration_iters;
    const double ex = early ? config.exaggeration : 1.0;
    const double mom = early ? config.momentum_initial : config.momentum_final;
    double zsum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      num[i * n + i] = 0.0;
      for (std::size_t j = i + 1; j < n; ++j) {
        const double dx = y[2 * i] - y[2 * j], dy = y[2 * i + 1] - y[2 * j + 1];
        const double q = 1.0 / (1.0 + dx * dx + dy * dy);
        num[i * n + j] = num[j * n + i] = q;
        zsum += 2.0 * q;
      }
    }
    double kl = 0.0;
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        const double q = std::max(num[i * n + j] / zsum, kTiny);
        const double p = P[i * n + j];
        if (p > 0.0) kl += p * std::log(p / q);
        const double mult = 4.0 * (ex * p - q) * num[i * n + j];
        grad[2 * i] += mult * (y[2 * i] - y[2 * j]);
        grad[2 * i + 1] += mult * (y[2 * i + 1] - y[2 * j + 1]);
      }
    }
    result.kl_history.push_back(kl);
    for (std::size_t k = 0; k < y.size(); ++k) {
      const bool same_sign = (grad[k] > 0.0) == (update[k] > 0.0);
      gains[k] = same_sign ? std::max(gains[k] * 0.8, 0.01) : gains[k] + 0.2;
      update[k] = mom * update[k] - config.learning_rate * gains[k] * grad[k];
      y[k] += update[k];
    }
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      mx += y[2 * i];
      my += y[2 * i + 1];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[2 * i] -= mx;
      y[2 * i + 1] -= my;
      if (!std::isfinite(y[2 * i]) || !std::isfinite(y[2 * i + 1])) {
        throw DomainError("tsne diverged at iteration " + std::to_string(it) + " (point " + std::to_string(i) +
                          "); lower the learning rate");
      }
    }
  }
  result.y = Tensor<double>({n, 2}, std::move(y));
  return result;
}

Tensor<double> class_centroids(const Tensor<double>& features, const std::vector<int>& labels, std::size_t classes) {
  const std::size_t n = features.rows(), d = features.cols();
  if (labels.size() != n) throw ShapeError("class_centroids: label count does not match rows");
  std::vector<double> sum(classes * d, 0.0);
  std::vector<std::size_t> count(classes, 0);
  const auto& v = features.values();
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) throw DomainError("class_centroids: label out of range");
    const auto c = static_cast<std::size_t>(labels[i]);
    ++count[c];
    for (std::size_t k = 0; k < d; ++k) sum[c * d + k] += v[i * d + k];
  }
  for (std::size_t c = 0; c < classes; ++c) {
    if (count[c] == 0) throw ContractError("class_centroids: class " + std::to_string(c) + " has no samples");
    for (std::size_t k = 0; k < d; ++k) sum[c * d + k] /= static_cast<double>(count[c]);
  }
  return Tensor<double>({classes, d}, std::move(sum));
}

double silhouette_score(const Tensor<double>& points, const std::vector<int>& labels) {
  const std::size_t n = points.rows(), d = points.cols();
  if (labels.size() != n) throw ShapeError("silhouette_score: label count does not match rows");
  std::map<int, std::size_t> sizes;
  for (int l : labels) ++sizes[l];
  if (sizes.size() < 2) throw DomainError("silhouette_score needs at least two clusters");
  const auto& v = points.values();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::map<int, double> dist_sum;
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) s += (v[i * d + k] - v[j * d + k]) * (v[i * d + k] - v[j * d + k]);
      dist_sum[labels[j]] += std::sqrt(s);
    }
    if (sizes[labels[i]] == 1) continue;
    const double a = dist_sum[labels[i]] / static_cast<double>(sizes[labels[i]] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (const auto& [label, size] : sizes)
      if (label != labels[i]) b = std::min(b, dist_sum[label] / static_cast<double>(size));
    total += (b - a) / std::max(a, b);
  }
  return total / static_cast<double>(n);
}

void write_embedding_csv(const Tensor<double>& y, const std::vector<std::string>& datasets,
                         const std::vector<int>& classes, const std::filesystem::path& path) {
  const std::size_t n = y.rows();
  if (datasets.size() != n || classes.size() != n) throw ShapeError("write_embedding_csv: metadata length mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write '" + path.string() + "'");
  out << "x,y,dataset,class\n";
  for (std::size_t i = 0; i < n; ++i) {
    out << format_number(y.at(i, 0)) << ',' << format_number(y.at(i, 1)) << ',' << datasets[i] << ',' << classes[i] << '\n';
  }
}

void render_scatter_png(const Tensor<double>& y, const std::vector<int>& classes, const std::filesystem::path& path,
                        std::size_t size) {
  static constexpr std::uint8_t kPalette[8][3] = {{31, 119, 180}, {255, 127, 14}, {44, 160, 44},  {214, 39, 40},
                                                  {148, 103, 189}, {140, 86, 75}, {227, 119, 194}, {127, 127, 127}};
  const std::size_t n = y.rows();
  RawImage img{size, size, 3, std::vector<std::uint8_t>(size * size * 3, 255)};
  double x0 = y.at(0, 0), x1 = x0, y0 = y.at(0, 1), y1 = y0;
  for (std::size_t i = 0; i < n; ++i) {
    x0 = std::min(x0, y.at(i, 0));
    x1 = std::max(x1, y.at(i, 0));
    y0 = std::min(y0, y.at(i, 1));
    y1 = std::max(y1, y.at(i, 1));
  }
  const double margin = 0.05 * static_cast<double>(size);
  const double span = std::max({x1 - x0, y1 - y0, 1e-12});
  const double scale = (static_cast<double>(size) - 2 * margin) / span;
  for (std::size_t i = 0; i < n; ++i) {
    const long cx = std::lround(margin + (y.at(i, 0) - x0) * scale);
    const long cy = std::lround(static_cast<double>(size) - margin - (y.at(i, 1) - y0) * scale);
    const auto* colour = kPalette[static_cast<std::size_t>(std::max(classes[i], 0)) % 8];
    for (long dy = -2; dy <= 2; ++dy)
      for (long dx = -2; dx <= 2; ++dx) {
        const long px = cx + dx, py = cy + dy;
        if (dx * dx + dy * dy > 5 || px < 0 || py < 0 || px >= static_cast<long>(size) || py >= static_cast<long>(size)) continue;
        for (std::size_t c = 0; c < 3; ++c) img.pixels[(static_cast<std::size_t>(py) * size + static_cast<std::size_t>(px)) * 3 + c] = colour[c];
      }
  }
  write_png(path, img);
}

}  // namespace lsvt
