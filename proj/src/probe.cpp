#include "lsvt/probe.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include "json.hpp"
#include "lsvt/errors.hpp"
#include "lsvt/ops.hpp"
#include "lsvt/rng.hpp"

namespace lsvt {

// ---------------------------------------------------------------------------
// Splitting

void SplitSpec::validate() const {
  for (double f : {train, val, test}) {
    if (!(f >= 0.0) || (!allow_zero && f == 0.0)) throw ConfigError("split fractions must be positive");
  }
  if (std::abs(train + val + test - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");
}

std::vector<std::size_t> largest_remainder(std::size_t n, const std::vector<double>& fractions) {
  std::vector<std::size_t> counts(fractions.size());
  std::vector<double> rem(fractions.size());
  std::size_t used = 0;
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    const double exact = fractions[i] * static_cast<double>(n);
    counts[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    rem[i] = exact - static_cast<double>(counts[i]);
    used += counts[i];
  }
  std::vector<std::size_t> order(fractions.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b] + 1e-12; });
  for (std::size_t k = 0; used < n; ++k, ++used) ++counts[order[k % order.size()]];
  return counts;
}

namespace {

std::vector<int> distinct_sorted(const std::vector<int>& labels) {
  std::vector<int> out(labels.begin(), labels.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

void shuffle(std::vector<std::size_t>& v, std::uint64_t seed) {
  Rng rng(seed);
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_index(rng, i)]);
}

}  // namespace

SplitIndices stratified_split(const std::vector<int>& labels, const SplitSpec& spec) {
  spec.validate();
  const std::vector<double> fr = {spec.train, spec.val, spec.test};
  const auto needed = static_cast<std::size_t>(std::count_if(fr.begin(), fr.end(), [](double f) { return f > 0; }));
  std::vector<std::vector<std::size_t>> groups;
  std::vector<int> group_labels;
  if (spec.stratified) {
    for (int c : distinct_sorted(labels)) {
      std::vector<std::size_t> idx;
      for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == c) idx.push_back(i);
      if (idx.size() < needed) {
        throw ContractError("class " + std::to_string(c) + " has " + std::to_string(idx.size()) +
                            " samples; stratified splitting needs at least " + std::to_string(needed));
      }
      groups.push_back(std::move(idx));
      group_labels.push_back(c);
    }
  } else {
    groups.emplace_back(labels.size());
    std::iota(groups.back().begin(), groups.back().end(), 0);
    group_labels.push_back(-1);
  }
  SplitIndices out;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    auto& idx = groups[g];
    shuffle(idx, derive_seed(spec.seed, 0x73706c6974ULL, static_cast<std::uint64_t>(group_labels[g] + 1)));
    const auto counts = largest_remainder(idx.size(), fr);
    auto it = idx.begin();
    for (auto [dst, count] : {std::pair{&out.train, counts[0]}, {&out.val, counts[1]}, {&out.test, counts[2]}}) {
      dst->insert(dst->end(), it, it + static_cast<std::ptrdiff_t>(count));
      it += static_cast<std::ptrdiff_t>(count);
    }
  }
  for (auto* v : {&out.train, &out.val, &out.test}) std::sort(v->begin(), v->end());
  return out;
}

SplitIndices resolve_splits(const Manifest& manifest, const SplitSpec& spec) {
  const auto& recs = manifest.records;
  const auto tagged = static_cast<std::size_t>(
      std::count_if(recs.begin(), recs.end(), [](const ManifestRecord& r) { return !r.split.empty(); }));
  if (tagged == 0) return stratified_split(manifest.labels(), spec);
  if (tagged != recs.size()) throw FormatError("manifest mixes records with and without split tags");
  SplitIndices out;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    if (recs[i].split == "train") out.train.push_back(i);
    else if (recs[i].split == "val") out.val.push_back(i);
    else out.test.push_back(i);
  }
  if (out.train.empty() || out.test.empty()) throw ContractError("tagged manifest needs train and test records");
  if (out.val.empty()) {
    std::vector<int> train_labels;
    for (auto i : out.train) train_labels.push_back(recs[i].label);
    SplitSpec carve = spec;
    carve.allow_zero = true;
    carve.train = spec.train / (spec.train + spec.val);
    carve.val = 1.0 - carve.train;
    carve.test = 0.0;
    const auto inner = stratified_split(train_labels, carve);
    std::vector<std::size_t> train, val;
    for (auto i : inner.train) train.push_back(out.train[i]);
    for (auto i : inner.val) val.push_back(out.train[i]);
    out.train = std::move(train);
    out.val = std::move(val);
  }
  return out;
}

std::optional<std::vector<std::size_t>> subsample(const std::vector<int>& labels, const std::vector<std::size_t>& pool,
                                                  double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("label fraction must lie in (0, 1]");
  std::vector<int> pool_labels;
  for (auto i : pool) pool_labels.push_back(labels.at(i));
  std::vector<std::size_t> out;
  for (int c : distinct_sorted(pool_labels)) {
    std::vector<std::size_t> idx;
    for (auto i : pool)
      if (labels[i] == c) idx.push_back(i);
    shuffle(idx, derive_seed(seed, 0x737562ULL, static_cast<std::uint64_t>(c)));
    const auto keep = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(idx.size())));
    if (keep == 0) return std::nullopt;
    out.insert(out.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(keep));
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------
// Metrics

double roc_auc_binary(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw ShapeError("roc_auc_binary: scores and labels differ in length");
  std::size_t pos = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw DomainError("roc_auc_binary: labels must be 0 or 1");
    if (std::isnan(scores[i])) throw DomainError("roc_auc_binary: NaN score");
    pos += static_cast<std::size_t>(labels[i]);
  }
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) throw DomainError("roc_auc_binary: both classes must be present");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Sum of (1-based, tie-averaged) ranks of the positives.
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]] == 1) rank_sum += avg_rank;
    i = j;
  }
  const double p = static_cast<double>(pos), n = static_cast<double>(neg);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * n);
}

std::size_t argmax_row(const std::vector<double>& probs, std::size_t row, std::size_t classes) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < classes; ++c)
    if (probs[row * classes + c] > probs[row * classes + best]) best = c;
  return best;
}

Metrics macro_metrics(const Tensor<double>& probs, const std::vector<int>& labels) {
  if (probs.rank() != 2) throw ShapeError("macro_metrics: probabilities must be N×C");
  const std::size_t N = probs.rows(), C = probs.cols();
  if (C < 2) throw ShapeError("macro_metrics needs at least 2 classes");
  if (labels.size() != N) throw ShapeError("macro_metrics: label count does not match rows");
  const auto& p = probs.values();
  Metrics m;
  m.n = N;
  m.per_class_auc.assign(C, std::numeric_limits<double>::quiet_NaN());
  std::vector<std::size_t> support(C, 0);
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= C) throw DomainError("macro_metrics: label out of range");
    ++support[static_cast<std::size_t>(y)];
  }
  const auto class_auc = [&](std::size_t c) {
    std::vector<double> s(N);
    std::vector<int> b(N);
    for (std::size_t i = 0; i < N; ++i) {
      s[i] = p[i * C + c];
      b[i] = labels[i] == static_cast<int>(c);
    }
    return roc_auc_binary(s, b);
  };
  if (C == 2) {
    // The two one-vs-rest AUCs coincide; report the positive-class one for both.
    if (support[0] > 0 && support[1] > 0) {
      m.per_class_auc[0] = m.per_class_auc[1] = class_auc(1);
    } else {
      warn("macro_metrics: only one class present; AUC undefined");
    }
  } else {
    for (std::size_t c = 0; c < C; ++c) {
      if (support[c] == 0) {
        warn("macro_metrics: class " + std::to_string(c) + " absent from labels; excluded from macro AUC");
      } else if (support[c] < N) {
        m.per_class_auc[c] = class_auc(c);
      }
    }
  }
  double auc_sum = 0.0;
  std::size_t auc_n = 0;
  for (double a : m.per_class_auc)
    if (!std::isnan(a)) {
      auc_sum += a;
      ++auc_n;
    }
  m.auc = auc_n ? auc_sum / static_cast<double>(auc_n) : std::numeric_limits<double>::quiet_NaN();

  std::vector<std::vector<std::size_t>> counts(C, std::vector<std::size_t>(C, 0));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < N; ++i) {
    const auto pred = argmax_row(p, i, C);
    ++counts[static_cast<std::size_t>(labels[i])][pred];
    correct += pred == static_cast<std::size_t>(labels[i]);
  }
  m.accuracy = N ? static_cast<double>(correct) / static_cast<double>(N) : 0.0;
  double f1_sum = 0.0;
  std::size_t f1_n = 0;
  for (std::size_t c = 0; c < C; ++c) {
    std::size_t tp = counts[c][c], fp = 0, fn = 0;
    for (std::size_t k = 0; k < C; ++k) {
      if (k == c) continue;
      fp += counts[k][c];
      fn += counts[c][k];
    }
    if (tp + fp + fn == 0) continue;  // class neither present nor predicted
    f1_sum += 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
    ++f1_n;
  }
  m.f1 = f1_n ? f1_sum / static_cast<double>(f1_n) : 0.0;
  m.confusion.assign(C, std::vector<double>(C, 0.0));
  for (std::size_t r = 0; r < C; ++r) {
    if (support[r] == 0) continue;
    for (std::size_t c = 0; c < C; ++c) m.confusion[r][c] = static_cast<double>(counts[r][c]) / static_cast<double>(support[r]);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Features and probes

std::string to_string(ProbeMode mode) { return mode == ProbeMode::frozen ? "frozen" : "end_to_end"; }

Tensor<double> extract_features(const ViTModel<float>& model, const std::vector<Image>& images, std::size_t batch_size) {
  if (images.empty()) throw ContractError("extract_features: no images");
  NoTapeScope<float> no_tape;
  const std::size_t d = model.config().d_model;
  std::vector<double> data;
  data.reserve(images.size() * d);
  for (std::size_t start = 0; start < images.size(); start += batch_size) {
    const std::size_t end = std::min(images.size(), start + batch_size);
    const std::vector<Image> batch(images.begin() + static_cast<std::ptrdiff_t>(start),
                                   images.begin() + static_cast<std::ptrdiff_t>(end));
    const auto out = vit_forward(model, batch);
    data.insert(data.end(), out.cls_embed.values().begin(), out.cls_embed.values().end());
  }
  return Tensor<double>({images.size(), d}, std::move(data));
}

LinearProbe LinearProbe::zeros(std::size_t dim, std::size_t classes, double dropout) {
  return {Tensor<double>::zeros({dim, classes}, true), Tensor<double>::zeros({classes}, true), dropout, classes};
}

namespace {

template <typename T>
Tensor<T> dropout_mask(std::size_t rows, std::size_t cols, double rate, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<T> mask(rows * cols);
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  for (auto& v : mask) v = uniform01(rng) < rate ? T{0} : keep_scale;
  return Tensor<T>({rows, cols}, std::move(mask));
}

void check_probe_input(const LinearProbe& probe, std::size_t width) {
  if (probe.weight.rows() != width) {
    throw ShapeError("probe expects " + std::to_string(probe.weight.rows()) + " features, got " +
                     std::to_string(width));
  }
}

template <typename T>
Tensor<T> probe_logits(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, double dropout, std::uint64_t seed) {
  auto in = dropout > 0.0 ? mul(x, dropout_mask<T>(x.rows(), x.cols(), dropout, seed)) : x;
  return add_bias(matmul(in, w), b);
}

struct Momentum {
  std::vector<std::vector<double>> v;
  void step(std::vector<Tensor<double>*> params, double lr, double mu, double wd) {
    if (v.empty())
      for (auto* p : params) v.emplace_back(p->size(), 0.0);
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto w = params[i]->mutable_data();
      auto g = params[i]->mutable_grad();
      for (std::size_t k = 0; k < w.size(); ++k) {
        v[i][k] = mu * v[i][k] + g[k] + wd * w[k];
        w[k] -= lr * v[i][k];
      }
      params[i]->zero_grad();
    }
  }
};

void check_labels(const std::vector<int>& labels, std::size_t classes) {
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= classes) throw DomainError("probe label out of range");
}

LinearProbe snapshot(const LinearProbe& p) {
  return {p.weight.detach(), p.bias.detach(), p.dropout, p.classes};
}

// Per-column z-scoring fitted on the training features. Constant columns keep scale 1.
struct Standardizer {
  std::vector<double> mean, inv_std;

  explicit Standardizer(const Tensor<double>& x) : mean(x.cols(), 0.0), inv_std(x.cols(), 1.0) {
    const std::size_t n = x.rows(), d = x.cols();
    const auto& v = x.values();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) mean[j] += v[i * d + j] / static_cast<double>(n);
    for (std::size_t j = 0; j < d; ++j) {
      double ss = 0.0;
      for (std::size_t i = 0; i < n; ++i) ss += (v[i * d + j] - mean[j]) * (v[i * d + j] - mean[j]);
      const double sd = std::sqrt(ss / static_cast<double>(n));
      if (sd > 1e-12) inv_std[j] = 1.0 / sd;
    }
  }

  Tensor<double> apply(const Tensor<double>& x) const {
    std::vector<double> out = x.values();
    const std::size_t d = x.cols();
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = (out[k] - mean[k % d]) * inv_std[k % d];
    return Tensor<double>(x.shape(), std::move(out));
  }

  // The same classifier expressed on raw features: W' = diag(1/s)·W, b' = b - (mean/s)·W.
  LinearProbe fold(const LinearProbe& p) const {
    const std::size_t d = p.weight.rows(), c = p.classes;
    std::vector<double> w = p.weight.values(), b = p.bias.values();
    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t k = 0; k < c; ++k) {
        w[j * c + k] *= inv_std[j];
        b[k] -= mean[j] * w[j * c + k];
      }
    return {Tensor<double>({d, c}, std::move(w)), Tensor<double>({c}, std::move(b)), p.dropout, c};
  }
};

}  // namespace

void ProbeHyper::validate() const {
  if (epochs == 0) throw ConfigError("probe_epochs must be >= 1");
  if (!(lr > 0.0) || !(e2e_backbone_lr >= 0.0) || !(e2e_probe_lr >= 0.0)) throw ConfigError("probe learning rates must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("probe momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("probe weight decay must be >= 0");
}

Tensor<double> predict(const LinearProbe& probe, const Tensor<double>& features) {
  check_probe_input(probe, features.cols());
  NoTapeScope<double> no_tape;
  return softmax_rows(add_bias(matmul(features, probe.weight), probe.bias));
}

Tensor<double> predict(const LinearProbe& probe, const ViTModel<float>& backbone, const std::vector<Image>& images) {
  return predict(probe, extract_features(backbone, images));
}

Tensor<double> probe_loss(const LinearProbe& probe, const Tensor<double>& features, const std::vector<int>& labels,
                          double dropout, std::uint64_t mask_seed) {
  check_probe_input(probe, features.cols());
  if (!(dropout >= 0.0 && dropout < 1.0)) throw DomainError("dropout must lie in [0, 1)");
  return cross_entropy(probe_logits(features, probe.weight, probe.bias, dropout, mask_seed), labels);
}

namespace {

struct FrozenFit {
  ProbeResult result;
  Standardizer z;
  LinearProbe best_z;  // result.probe before folding
};

FrozenFit fit_frozen(const FeatureSet& train, const FeatureSet& val, std::size_t classes, double dropout,
                     const ProbeHyper& hyper) {
  hyper.validate();
  if (train.labels.empty() || val.labels.empty()) throw ContractError("train_probe: empty split");
  check_labels(train.labels, classes);
  check_labels(val.labels, classes);
  if (!(dropout >= 0.0 && dropout < 1.0)) throw DomainError("dropout must lie in [0, 1)");
  // Optimisation runs on standardized features; snapshots are folded back to raw features.
  const Standardizer z(train.x);
  const auto train_x = z.apply(train.x), val_x = z.apply(val.x);
  auto probe = LinearProbe::zeros(train.x.cols(), classes, dropout);
  ProbeResult result{z.fold(probe), z.fold(probe), std::nullopt, 0, -1.0, {}};
  LinearProbe best_z = snapshot(probe);
  Momentum opt;
  for (std::size_t epoch = 1; epoch <= hyper.epochs; ++epoch) {
    Tape<double> tape;
    {
      TapeScope<double> scope(tape);
      auto loss = probe_loss(probe, train_x, train.labels, dropout, derive_seed(hyper.seed, 0x70726f6265ULL, epoch));
      tape.backward(loss);
    }
    opt.step({&probe.weight, &probe.bias}, hyper.lr, hyper.momentum, hyper.weight_decay);
    const double auc = macro_metrics(predict(probe, val_x), val.labels).auc;
    result.val_auc_history.push_back(auc);
    if (auc > result.best_val_auc || (std::isnan(result.best_val_auc) && !std::isnan(auc))) {
      result.best_val_auc = auc;
      result.best_epoch = epoch;
      result.probe = z.fold(probe);
      best_z = snapshot(probe);
    }
  }
  result.final_probe = z.fold(probe);
  if (result.best_epoch == 0) {
    // Validation AUC undefined throughout (one-class validation set): keep the final probe.
    result.best_epoch = hyper.epochs;
    result.probe = result.final_probe;
    best_z = snapshot(probe);
  }
  return {std::move(result), z, std::move(best_z)};
}

}  // namespace

ProbeResult train_probe(const FeatureSet& train, const FeatureSet& val, std::size_t classes, double dropout,
                        const ProbeHyper& hyper) {
  return fit_frozen(train, val, classes, dropout, hyper).result;
}

ProbeResult train_probe_end_to_end(const ViTModel<float>& backbone, const std::vector<Image>& train_images,
                                   const std::vector<int>& train_labels, const std::vector<Image>& val_images,
                                   const std::vector<int>& val_labels, std::size_t classes, double dropout,
                                   const ProbeHyper& hyper) {
  if (train_images.empty() || val_images.empty()) throw ContractError("train_probe_end_to_end: empty split");
  const FeatureSet train{extract_features(backbone, train_images), train_labels};
  const FeatureSet val{extract_features(backbone, val_images), val_labels};
  const auto fit = fit_frozen(train, val, classes, dropout, hyper);
  const auto& warm = fit.result;

  // Joint steps keep the warm start's standardization fixed and update the z-space probe.
  const std::size_t d = train.x.cols();
  std::vector<float> neg_mean(d), inv_std(train_images.size() * d);
  for (std::size_t j = 0; j < d; ++j) neg_mean[j] = static_cast<float>(-fit.z.mean[j]);
  for (std::size_t k = 0; k < inv_std.size(); ++k) inv_std[k] = static_cast<float>(fit.z.inv_std[k % d]);
  const Tensor<float> shift({d}, neg_mean), spread({train_images.size(), d}, inv_std);

  ViTModel<float> model(backbone);
  model.set_requires_grad(true);
  auto w = cast<float>(fit.best_z.weight);
  auto b = cast<float>(fit.best_z.bias);
  w.set_requires_grad(true);
  b.set_requires_grad(true);

  ProbeResult result{snapshot(warm.probe), snapshot(warm.probe), ViTModel<float>(model), 0, warm.best_val_auc,
                     {warm.best_val_auc}};
  auto params = model.named_parameters();
  std::vector<std::vector<float>> vel;
  for (auto& [name, p] : params) vel.emplace_back(p.size(), 0.0f);
  std::vector<float> vw(w.size(), 0.0f), vb(b.size(), 0.0f);
  const auto update = [&](Tensor<float>& p, std::vector<float>& v, double lr) {
    auto x = p.mutable_data();
    auto g = p.mutable_grad();
    for (std::size_t k = 0; k < x.size(); ++k) {
      v[k] = static_cast<float>(hyper.momentum * v[k] + g[k] + hyper.weight_decay * x[k]);
      x[k] = static_cast<float>(x[k] - lr * v[k]);
    }
    p.zero_grad();
  };
  for (std::size_t epoch = 1; epoch <= hyper.e2e_epochs; ++epoch) {
    Tape<float> tape;
    {
      TapeScope<float> scope(tape);
      auto feats = mul(add_bias(vit_forward(model, train_images).cls_embed, shift), spread);
      auto logits = probe_logits(feats, w, b, dropout, derive_seed(hyper.seed, 0x6532650000ULL, epoch));
      tape.backward(cross_entropy(logits, train_labels));
    }
    for (std::size_t i = 0; i < params.size(); ++i) update(params[i].second, vel[i], hyper.e2e_backbone_lr);
    update(w, vw, hyper.e2e_probe_lr);
    update(b, vb, hyper.e2e_probe_lr);

    const auto current = fit.z.fold({cast<double>(w), cast<double>(b), dropout, classes});
    const double auc = macro_metrics(predict(current, model, val_images), val_labels).auc;
    result.val_auc_history.push_back(auc);
    if (auc > result.best_val_auc) {
      result.best_val_auc = auc;
      result.best_epoch = epoch;
      result.probe = snapshot(current);
      result.backbone = ViTModel<float>(model);
    }
    result.final_probe = snapshot(current);
  }
  result.backbone->set_requires_grad(false);
  return result;
}

// ---------------------------------------------------------------------------
// Ablation

std::vector<AblationCell> ablation_sweep(const ViTModel<float>& teacher, const ProbeData& data,
                                         const AblationGrid& grid, const ProbeHyper& hyper) {
  const FeatureSet train{extract_features(teacher, data.train_images), data.train_labels};
  const FeatureSet val{extract_features(teacher, data.val_images), data.val_labels};
  const auto test_x = extract_features(teacher, data.test_images);
  std::vector<std::size_t> pool(data.train_labels.size());
  std::iota(pool.begin(), pool.end(), 0);

  std::vector<AblationCell> cells;
  for (double fraction : grid.fractions) {
    const auto subset = subsample(data.train_labels, pool, fraction, hyper.seed);
    for (double dropout : grid.dropouts) {
      for (ProbeMode mode : grid.modes) {
        AblationCell cell{fraction, dropout, mode, !subset, subset ? subset->size() : 0, {}};
        if (subset) {
          std::vector<int> labels;
          std::vector<Image> images;
          for (auto i : *subset) {
            labels.push_back(data.train_labels[i]);
            if (mode == ProbeMode::end_to_end) images.push_back(data.train_images[i]);
          }
          if (mode == ProbeMode::frozen) {
            const FeatureSet sub{gather_rows(train.x, *subset), labels};
            const auto r = train_probe(sub, val, data.classes, dropout, hyper);
            cell.test = macro_metrics(predict(r.probe, test_x), data.test_labels);
          } else {
            const auto r = train_probe_end_to_end(teacher, images, labels, data.val_images, data.val_labels,
                                                  data.classes, dropout, hyper);
            cell.test = macro_metrics(predict(r.probe, *r.backbone, data.test_images), data.test_labels);
          }
        }
        cells.push_back(std::move(cell));
      }
    }
  }
  return cells;
}

// ---------------------------------------------------------------------------
// Reports

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

namespace {
std::ofstream open_report(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write '" + path.string() + "'");
  return out;
}
}  // namespace

void write_ablation_csv(const std::vector<AblationCell>& cells, const std::filesystem::path& path) {
  auto out = open_report(path);
  out << "fraction,dropout,mode,status,n_train,auc,accuracy,f1\n";
  for (const auto& c : cells) {
    out << format_number(c.fraction) << ',' << format_number(c.dropout) << ',' << to_string(c.mode) << ','
        << (c.skipped ? "skipped" : "ok") << ',' << c.n_train << ',';
    if (c.skipped) {
      out << ",,\n";
    } else {
      out << format_number(c.test.auc) << ',' << format_number(c.test.accuracy) << ',' << format_number(c.test.f1) << '\n';
    }
  }
}

void write_confusion_csv(const Metrics& m, const std::filesystem::path& path) {
  auto out = open_report(path);
  out << "true";
  for (std::size_t c = 0; c < m.confusion.size(); ++c) out << ",pred_" << c;
  out << '\n';
  for (std::size_t r = 0; r < m.confusion.size(); ++r) {
    out << r;
    for (double v : m.confusion[r]) out << ',' << format_number(v);
    out << '\n';
  }
}

void write_metrics_csv(const std::vector<DatasetReport>& rows, const std::filesystem::path& path) {
  auto out = open_report(path);
  out << "dataset,mode,n,auc,accuracy,f1\n";
  for (const auto& r : rows) {
    out << r.dataset << ',' << r.mode << ',' << r.metrics.n << ',' << format_number(r.metrics.auc) << ','
        << format_number(r.metrics.accuracy) << ',' << format_number(r.metrics.f1) << '\n';
  }
}

void write_report_json(const std::vector<DatasetReport>& rows, const std::filesystem::path& path) {
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    nlohmann::ordered_json per_class = nlohmann::ordered_json::array();
    for (double a : r.metrics.per_class_auc) per_class.push_back(format_number(a));
    nlohmann::ordered_json confusion = nlohmann::ordered_json::array();
    for (const auto& row : r.metrics.confusion) {
      nlohmann::ordered_json jr = nlohmann::ordered_json::array();
      for (double v : row) jr.push_back(format_number(v));
      confusion.push_back(jr);
    }
    j.push_back({{"dataset", r.dataset},
                 {"mode", r.mode},
                 {"n", r.metrics.n},
                 {"auc", format_number(r.metrics.auc)},
                 {"accuracy", format_number(r.metrics.accuracy)},
                 {"f1", format_number(r.metrics.f1)},
                 {"per_class_auc", per_class},
                 {"confusion", confusion}});
  }
  auto out = open_report(path);
  out << j.dump(2) << '\n';
}

}  // namespace lsvt
