#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lsvt/augment.hpp"
#include "lsvt/manifest.hpp"
#include "lsvt/tensor.hpp"
#include "lsvt/vit.hpp"

namespace lsvt {

// ---------------------------------------------------------------------------
// Splitting

struct SplitSpec {
  double train = 0.6, val = 0.2, test = 0.2;
  std::uint64_t seed = 0;
  bool stratified = true;
  bool allow_zero = false;  // permit zero fractions (testing / degenerate sweeps)

  void validate() const;
};

struct SplitIndices {
  std::vector<std::size_t> train, val, test;  // indices into the input, ascending
};

// Largest-remainder allocation of n items over the fractions: each split gets floor(f·n), the
// leftover items go one each to the largest fractional parts (ties: train, val, test order).
std::vector<std::size_t> largest_remainder(std::size_t n, const std::vector<double>& fractions);

// Per class (or globally when !stratified): seeded shuffle, then allocate counts by
// largest_remainder. Throws ContractError naming a class with fewer than 3 samples.
SplitIndices stratified_split(const std::vector<int>& labels, const SplitSpec& spec);

// Honour split tags when every record has one: missing val is carved from train at
// val/(train+val); otherwise split with `spec`.
SplitIndices resolve_splits(const Manifest& manifest, const SplitSpec& spec);

// Stratified subsample keeping lround(fraction·n_c) per class, chosen by a seeded shuffle so
// that smaller fractions give nested subsets. Returns nullopt when a class would vanish.
std::optional<std::vector<std::size_t>> subsample(const std::vector<int>& labels,
                                                  const std::vector<std::size_t>& pool, double fraction,
                                                  std::uint64_t seed);

// ---------------------------------------------------------------------------
// Metrics

// Rank-based AUC with average ranks for ties (half credit). DomainError unless both classes
// are present. Labels are 0/1.
double roc_auc_binary(const std::vector<double>& scores, const std::vector<int>& labels);

struct Metrics {
  double auc = 0.0;  // macro one-vs-rest over classes present in the labels
  double accuracy = 0.0;
  double f1 = 0.0;   // macro over classes with TP+FP+FN > 0
  std::vector<double> per_class_auc;  // NaN for absent classes
  std::vector<std::vector<double>> confusion;  // rows: true class, normalized; absent rows all zero
  std::size_t n = 0;
};

// Argmax of a row, ties to the lowest index.
std::size_t argmax_row(const std::vector<double>& probs, std::size_t row, std::size_t classes);

Metrics macro_metrics(const Tensor<double>& probs, const std::vector<int>& labels);

// ---------------------------------------------------------------------------
// Features and probes

struct FeatureSet {
  Tensor<double> x;  // N×d_model
  std::vector<int> labels;
};

// Teacher class embeddings of already-standardized images, in input order; no augmentation.
Tensor<double> extract_features(const ViTModel<float>& model, const std::vector<Image>& images,
                                std::size_t batch_size = 64);

enum class ProbeMode { frozen, end_to_end };
std::string to_string(ProbeMode mode);

struct LinearProbe {
  Tensor<double> weight;  // d×C
  Tensor<double> bias;    // C
  double dropout = 0.0;
  std::size_t classes = 0;

  static LinearProbe zeros(std::size_t dim, std::size_t classes, double dropout = 0.0);
};

struct ProbeHyper {
  std::size_t epochs = 200;       // full-batch steps on frozen features
  double lr = 0.5;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::size_t e2e_epochs = 5;     // joint steps after the frozen warm start
  double e2e_backbone_lr = 3e-4;
  double e2e_probe_lr = 0.05;
  std::uint64_t seed = 0;

  void validate() const;
};

struct ProbeResult {
  LinearProbe probe;        // at the best validation epoch
  LinearProbe final_probe;  // after the last epoch
  std::optional<ViTModel<float>> backbone;  // fine-tuned copy in end-to-end mode
  std::size_t best_epoch = 0;
  double best_val_auc = 0.0;
  std::vector<double> val_auc_history;
};

// Probabilities softmax(x·W + b); dropout is never applied here.
Tensor<double> predict(const LinearProbe& probe, const Tensor<double>& features);
Tensor<double> predict(const LinearProbe& probe, const ViTModel<float>& backbone, const std::vector<Image>& images);

// Multinomial cross-entropy of the probe on (features, labels) with a given dropout mask
// seed; exposed for gradient checks. Dropout is inverted (kept features scaled by 1/(1-p)).
Tensor<double> probe_loss(const LinearProbe& probe, const Tensor<double>& features, const std::vector<int>& labels,
                          double dropout, std::uint64_t mask_seed);

// Frozen mode: full-batch gradient descent (with momentum) on features z-scored with the
// training statistics (dropout and weight decay act in that space); the returned probes are
// folded back to act on raw features. Best epoch by validation macro AUC (earliest on ties).
ProbeResult train_probe(const FeatureSet& train, const FeatureSet& val, std::size_t classes, double dropout,
                        const ProbeHyper& hyper);

// End-to-end mode: frozen warm start, then joint full-batch steps over a copy of `backbone`
// and the probe. `backbone` itself is never modified.
ProbeResult train_probe_end_to_end(const ViTModel<float>& backbone, const std::vector<Image>& train_images,
                                   const std::vector<int>& train_labels, const std::vector<Image>& val_images,
                                   const std::vector<int>& val_labels, std::size_t classes, double dropout,
                                   const ProbeHyper& hyper);

// ---------------------------------------------------------------------------
// Ablation

struct AblationGrid {
  std::vector<double> fractions = {0.065, 0.10, 0.25, 0.50, 0.75, 1.0};
  std::vector<double> dropouts = {0.0, 0.1, 0.2, 0.5};
  std::vector<ProbeMode> modes = {ProbeMode::frozen, ProbeMode::end_to_end};
};

struct AblationCell {
  double fraction = 0.0;
  double dropout = 0.0;
  ProbeMode mode = ProbeMode::frozen;
  bool skipped = false;
  std::size_t n_train = 0;
  Metrics test;
};

struct ProbeData {
  std::vector<Image> train_images, val_images, test_images;  // standardized
  std::vector<int> train_labels, val_labels, test_labels;
  std::size_t classes = 0;
};

std::vector<AblationCell> ablation_sweep(const ViTModel<float>& teacher, const ProbeData& data,
                                         const AblationGrid& grid, const ProbeHyper& hyper);

// ---------------------------------------------------------------------------
// Reports (fixed-precision text so reruns are byte-identical)

std::string format_number(double v);
void write_ablation_csv(const std::vector<AblationCell>& cells, const std::filesystem::path& path);
void write_confusion_csv(const Metrics& m, const std::filesystem::path& path);

struct DatasetReport {
  std::string dataset;
  std::string mode;
  Metrics metrics;
};
void write_metrics_csv(const std::vector<DatasetReport>& rows, const std::filesystem::path& path);
void write_report_json(const std::vector<DatasetReport>& rows, const std::filesystem::path& path);

}  // namespace lsvt
