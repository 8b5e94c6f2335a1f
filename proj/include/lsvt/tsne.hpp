#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lsvt/tensor.hpp"

namespace lsvt {

struct TsneConfig {
  double perplexity = 30.0;
  double learning_rate = 200.0;
  std::size_t iterations = 1000;
  double exaggeration = 12.0;
  std::size_t exaggeration_iters = 250;
  double momentum_initial = 0.5;
  double momentum_final = 0.8;  // switched on when exaggeration ends
  double init_std = 1e-4;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Affinities {
  std::size_t n = 0;
  std::vector<double> p;             // N×N joint probabilities, row-major
  std::vector<double> beta;          // per-point precision 1/(2σ²)
  std::vector<double> entropy_bits;  // achieved conditional entropies
};

// Entropy tolerance of the per-point precision search, in bits.
inline constexpr double kPerplexityToleranceBits = 1e-4;

// Conditional Gaussian affinities with per-point σ from binary search on entropy =
// log2(perplexity), symmetrised as (p_{j|i} + p_{i|j}) / 2N. Two points are a forced case
// (both entries 1/2). Throws ConfigError unless perplexity < N (N > 2), DomainError when the
// search fails (naming the point), e.g. for duplicate-only input.
Affinities joint_affinities(const Tensor<double>& x, double perplexity);

struct TsneResult {
  Tensor<double> y;                // N×2
  std::vector<double> kl_history;  // KL(P‖Q) with the un-exaggerated P, one entry per iteration
};

// Exact t-SNE: momentum gradient descent with per-coordinate gains on KL(P‖Q), Student-t Q.
// Throws DomainError if coordinates become non-finite.
TsneResult tsne_embed(const Tensor<double>& x, const TsneConfig& config);

// Mean of each class's rows; C×d. ContractError when a class in [0, classes) is empty.
Tensor<double> class_centroids(const Tensor<double>& features, const std::vector<int>& labels, std::size_t classes);

// Mean silhouette coefficient under Euclidean distance; singleton clusters score 0.
double silhouette_score(const Tensor<double>& points, const std::vector<int>& labels);

// CSV with header x,y,dataset,class.
void write_embedding_csv(const Tensor<double>& y, const std::vector<std::string>& datasets,
                         const std::vector<int>& classes, const std::filesystem::path& path);
// Scatter plot, one colour per class, on a white size×size canvas.
void render_scatter_png(const Tensor<double>& y, const std::vector<int>& classes, const std::filesystem::path& path,
                        std::size_t size = 512);

}  // namespace lsvt
