#include "lsvt/config.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace lsvt {

namespace {

// Shortest text that parses back to the same double.
std::string num(double v) {
  char buf[64];
  for (int precision = 1; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof(buf), "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

std::string num(std::size_t v) { return std::to_string(v); }
std::string flag(bool v) { return v ? "true" : "false"; }

template <typename T>
std::string join(const std::vector<T>& items, std::string (*fmt)(T)) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + fmt(items[i]);
  return out;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<ConfigKey> build_schema() {
  const SyntheticSpec synth;
  const ViTConfig model;
  const DistillConfig d;
  const SplitSpec split;
  const ProbeHyper probe;
  const AblationGrid grid;
  const TsneConfig tsne;
  return {
      {"data_dir", "data", "directory written by synth and read through its manifest"},
      {"run_dir", "run", "output directory of a stage"},
      {"manifest", "", "manifest CSV; empty means <data_dir>/manifest.csv"},
      {"checkpoint", "", "pretraining checkpoint; empty means <run_dir>/checkpoint.lsvt"},

      {"synth_image_size", num(synth.image_size), "synthetic image side in pixels"},
      {"synth_classes", num(synth.classes), "synthetic class count"},
      {"synth_noise", num(synth.noise), "synthetic nuisance level in [0, 1]"},
      {"synth_seed", num(static_cast<std::size_t>(synth.seed)), "synthetic generator seed"},
      {"synth_train", num(synth.n_train), "synthetic train images"},
      {"synth_val", num(synth.n_val), "synthetic validation images"},
      {"synth_test", num(synth.n_test), "synthetic test images"},
      {"synth_dataset", synth.dataset, "dataset id written to the manifest"},

      {"model_preset", model.preset, "tiny or deit-b"},
      {"proto_dim", num(model.proto_dim), "prototype count K"},
      {"head_hidden", num(model.head_hidden), "projection head hidden width"},
      {"init_std", num(model.init_std), "weight init std; 0 = 1/sqrt(fan_in)"},
      {"head_init_std", num(model.head_init_std), "projection head init std; 0 = 1/sqrt(fan_in)"},
      {"base_size", num(d.base_size), "standardization size in pixels, or 'paper' for 256"},

      {"seed", num(static_cast<std::size_t>(d.seed)), "pretraining seed"},
      {"tau_t", num(d.tau_t), "teacher temperature"},
      {"tau_s", num(d.tau_s), "student temperature"},
      {"ema", "per_epoch", "teacher EMA granularity: per_epoch or per_step"},
      {"ema_lambda", "auto", "EMA coefficient; auto = 0.9 per epoch, 0.996 per step"},
      {"centering", flag(d.centering), "subtract a running mean from teacher logits"},
      {"center_momentum", num(d.center_momentum), "centre running-mean momentum"},
      {"epochs", num(d.epochs), "pretraining epochs"},
      {"batch_size", num(d.batch_size), "pretraining batch size"},
      {"optimizer", "sgd", "pretraining optimizer (sgd with momentum)"},
      {"lr", num(d.lr), "peak learning rate (cosine decay)"},
      {"lr_min", num(d.lr_min), "final learning rate"},
      {"momentum", num(d.momentum), "SGD momentum"},
      {"weight_decay", num(d.weight_decay), "L2 weight decay"},
      {"max_grad_norm", num(d.max_grad_norm), "global gradient-norm clip; 0 disables"},
      {"student_sees_globals", flag(d.student_sees_globals), "student also embeds the global views"},
      {"n_global", num(d.global.count), "global views per image"},
      {"global_scale_lo", num(d.global.scale_lo), "global crop area fraction, lower bound"},
      {"global_scale_hi", num(d.global.scale_hi), "global crop area fraction, upper bound"},
      {"global_size", "auto", "global view side; auto = base_size"},
      {"n_local", num(d.local.count), "local views per image"},
      {"local_scale_lo", num(d.local.scale_lo), "local crop area fraction, lower bound"},
      {"local_scale_hi", num(d.local.scale_hi), "local crop area fraction, upper bound"},
      {"local_size", "auto", "local view side; auto = base_size / 2"},
      {"p_flip", num(d.photo.p_flip), "horizontal flip probability"},
      {"p_gray", num(d.photo.p_gray), "grayscale probability"},
      {"photometric_extra", flag(d.photo.extra), "add brightness/contrast jitter and blur"},

      {"split_train", num(split.train), "train fraction for untagged manifests"},
      {"split_val", num(split.val), "validation fraction"},
      {"split_test", num(split.test), "test fraction"},
      {"split_seed", num(static_cast<std::size_t>(split.seed)), "split shuffle seed"},
      {"stratified", flag(split.stratified), "split per class"},

      {"probe_mode", "frozen", "frozen or end_to_end"},
      {"probe_dropout", "0", "probe input dropout rate"},
      {"probe_epochs", num(probe.epochs), "full-batch probe epochs"},
      {"probe_lr", num(probe.lr), "probe learning rate"},
      {"probe_momentum", num(probe.momentum), "probe momentum"},
      {"probe_weight_decay", num(probe.weight_decay), "probe L2 weight decay"},
      {"probe_seed", num(static_cast<std::size_t>(probe.seed)), "probe dropout/subsample seed"},
      {"e2e_epochs", num(probe.e2e_epochs), "joint epochs in end-to-end mode"},
      {"e2e_backbone_lr", num(probe.e2e_backbone_lr), "backbone learning rate in end-to-end mode"},
      {"e2e_probe_lr", num(probe.e2e_probe_lr), "probe learning rate in end-to-end mode"},

      {"ablate_fractions", join<double>(grid.fractions, num), "label fractions of the ablation grid"},
      {"ablate_dropouts", join<double>(grid.dropouts, num), "dropout rates of the ablation grid"},
      {"ablate_modes", "frozen,end_to_end", "probe modes of the ablation grid"},

      {"tsne_input", "features", "features (one point per image) or centroids (one per class)"},
      {"tsne_perplexity", num(tsne.perplexity), "t-SNE perplexity"},
      {"tsne_lr", num(tsne.learning_rate), "t-SNE learning rate"},
      {"tsne_iterations", num(tsne.iterations), "t-SNE iterations"},
      {"tsne_exaggeration", num(tsne.exaggeration), "early exaggeration factor"},
      {"tsne_exaggeration_iters", num(tsne.exaggeration_iters), "early exaggeration iterations"},
      {"tsne_seed", num(static_cast<std::size_t>(tsne.seed)), "t-SNE initialisation seed"},

      {"attmap_count", "4", "number of test images rendered by attmap"},
  };
}

struct Reader {
  const RunConfig& cfg;

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    throw ConfigError(key + ": " + what + " (got '" + cfg.get(key) + "')");
  }
  double real(const std::string& key) const {
    const auto& s = cfg.get(key);
    double v = 0.0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v)) fail(key, "expected a number");
    return v;
  }
  std::size_t count(const std::string& key) const {
    const auto& s = cfg.get(key);
    std::size_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) fail(key, "expected a non-negative integer");
    return v;
  }
  std::uint64_t seed(const std::string& key) const {
    const auto& s = cfg.get(key);
    std::uint64_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) fail(key, "expected an unsigned integer seed");
    return v;
  }
  bool boolean(const std::string& key) const {
    const auto& s = cfg.get(key);
    if (s == "true" || s == "1" || s == "on" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "off" || s == "no") return false;
    fail(key, "expected true or false");
  }
  std::vector<std::string> list(const std::string& key) const {
    std::vector<std::string> out;
    std::stringstream ss(cfg.get(key));
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (item.empty()) fail(key, "empty list item");
      out.push_back(item);
    }
    if (out.empty()) fail(key, "expected a comma-separated list");
    return out;
  }
  std::vector<double> reals(const std::string& key) const {
    std::vector<double> out;
    for (const auto& item : list(key)) {
      double v = 0.0;
      const auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
      if (ec != std::errc() || p != item.data() + item.size()) fail(key, "expected numbers");
      out.push_back(v);
    }
    return out;
  }
  // Re-throws a sub-config validation failure with the key context.
  template <typename F>
  void check(const std::string& what, F&& f) const {
    try {
      f();
    } catch (const ConfigError& e) {
      throw ConfigError(what + ": " + e.what());
    }
  }
};

ProbeMode parse_mode(const Reader& r, const std::string& key, const std::string& s) {
  if (s == "frozen") return ProbeMode::frozen;
  if (s == "end_to_end") return ProbeMode::end_to_end;
  r.fail(key, "expected frozen or end_to_end");
}

}  // namespace

const std::vector<ConfigKey>& config_schema() {
  static const std::vector<ConfigKey> schema = build_schema();
  return schema;
}

RunConfig::RunConfig() {
  for (const auto& k : config_schema()) values_.emplace_back(k.name, k.default_value);
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str(), path.string());
}

RunConfig RunConfig::from_text(std::string_view text, const std::string& origin) {
  RunConfig cfg;
  std::size_t line_no = 0, pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const auto line = trim(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    try {
      cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const UnknownKeyError& e) {
      throw UnknownKeyError(origin + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return cfg;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = std::find_if(values_.begin(), values_.end(), [&](const auto& kv) { return kv.first == key; });
  if (it == values_.end()) throw UnknownKeyError("unknown config key '" + key + "'");
  it->second = value;
}

void RunConfig::apply_override(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) throw UnknownKeyError("--set expects key=value, got '" + std::string(assignment) + "'");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = std::find_if(values_.begin(), values_.end(), [&](const auto& kv) { return kv.first == key; });
  if (it == values_.end()) throw UnknownKeyError("unknown config key '" + key + "'");
  return it->second;
}

std::string RunConfig::snapshot() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

ResolvedConfig RunConfig::resolve() const {
  const Reader r{*this};
  ResolvedConfig c;
  c.data_dir = get("data_dir");
  c.run_dir = get("run_dir");
  c.manifest = get("manifest").empty() ? c.data_dir / "manifest.csv" : std::filesystem::path(get("manifest"));
  c.checkpoint = get("checkpoint").empty() ? c.run_dir / "checkpoint.lsvt" : std::filesystem::path(get("checkpoint"));

  c.synth.image_size = r.count("synth_image_size");
  c.synth.classes = r.count("synth_classes");
  c.synth.noise = r.real("synth_noise");
  c.synth.seed = r.seed("synth_seed");
  c.synth.n_train = r.count("synth_train");
  c.synth.n_val = r.count("synth_val");
  c.synth.n_test = r.count("synth_test");
  c.synth.dataset = get("synth_dataset");
  if (c.synth.dataset.empty() || c.synth.dataset.find_first_of(",\"\n") != std::string::npos) {
    r.fail("synth_dataset", "must be non-empty without commas or quotes");
  }
  r.check("synthetic", [&] { c.synth.validate(); });

  try {
    c.model = ViTConfig::from_preset(get("model_preset"));
  } catch (const ConfigError&) {
    r.fail("model_preset", "expected tiny or deit-b");
  }
  c.model.proto_dim = r.count("proto_dim");
  c.model.head_hidden = r.count("head_hidden");
  c.model.init_std = r.real("init_std");
  c.model.head_init_std = r.real("head_init_std");

  auto& d = c.distill;
  d.base_size = get("base_size") == "paper" ? 256 : r.count("base_size");
  if (d.base_size == 0) r.fail("base_size", "must be positive");
  d.seed = r.seed("seed");
  d.tau_t = r.real("tau_t");
  d.tau_s = r.real("tau_s");
  const auto& ema = get("ema");
  if (ema == "per_epoch") d.ema = EmaGranularity::per_epoch;
  else if (ema == "per_step") d.ema = EmaGranularity::per_step;
  else r.fail("ema", "expected per_epoch or per_step");
  d.ema_lambda = get("ema_lambda") == "auto" ? (d.ema == EmaGranularity::per_step ? 0.996 : 0.9) : r.real("ema_lambda");
  d.centering = r.boolean("centering");
  d.center_momentum = r.real("center_momentum");
  d.epochs = r.count("epochs");
  d.batch_size = r.count("batch_size");
  if (get("optimizer") != "sgd") r.fail("optimizer", "only sgd (with momentum) is available");
  d.lr = r.real("lr");
  d.lr_min = r.real("lr_min");
  d.momentum = r.real("momentum");
  d.weight_decay = r.real("weight_decay");
  d.max_grad_norm = r.real("max_grad_norm");
  d.student_sees_globals = r.boolean("student_sees_globals");
  d.global.count = r.count("n_global");
  d.global.scale_lo = r.real("global_scale_lo");
  d.global.scale_hi = r.real("global_scale_hi");
  d.global.size = get("global_size") == "auto" ? d.base_size : r.count("global_size");
  d.local.count = r.count("n_local");
  d.local.scale_lo = r.real("local_scale_lo");
  d.local.scale_hi = r.real("local_scale_hi");
  d.local.size = get("local_size") == "auto" ? d.base_size / 2 : r.count("local_size");
  d.photo.p_flip = r.real("p_flip");
  d.photo.p_gray = r.real("p_gray");
  d.photo.extra = r.boolean("photometric_extra");
  r.check("pretraining", [&] { d.validate(); });
  // The positional grid is sized for the global views; local views interpolate it.
  c.model.image_size = d.global.size;
  r.check("model", [&] { c.model.validate(); });
  for (const auto& [key, size] : {std::pair<std::string, std::size_t>{"global_size", d.global.size}, {"local_size", d.local.size}}) {
    if (size == 0 || size % c.model.patch_size != 0) {
      throw ConfigError(key + ": view size " + std::to_string(size) + " must be a positive multiple of the patch size " +
                        std::to_string(c.model.patch_size));
    }
  }

  c.split.train = r.real("split_train");
  c.split.val = r.real("split_val");
  c.split.test = r.real("split_test");
  c.split.seed = r.seed("split_seed");
  c.split.stratified = r.boolean("stratified");
  r.check("split", [&] { c.split.validate(); });

  c.probe_mode = parse_mode(r, "probe_mode", get("probe_mode"));
  c.probe_dropout = r.real("probe_dropout");
  if (!(c.probe_dropout >= 0.0 && c.probe_dropout < 1.0)) r.fail("probe_dropout", "must lie in [0, 1)");
  c.probe.epochs = r.count("probe_epochs");
  c.probe.lr = r.real("probe_lr");
  c.probe.momentum = r.real("probe_momentum");
  c.probe.weight_decay = r.real("probe_weight_decay");
  c.probe.seed = r.seed("probe_seed");
  c.probe.e2e_epochs = r.count("e2e_epochs");
  c.probe.e2e_backbone_lr = r.real("e2e_backbone_lr");
  c.probe.e2e_probe_lr = r.real("e2e_probe_lr");
  r.check("probe", [&] { c.probe.validate(); });

  c.ablate.fractions = r.reals("ablate_fractions");
  for (double f : c.ablate.fractions)
    if (!(f > 0.0 && f <= 1.0)) r.fail("ablate_fractions", "fractions must lie in (0, 1]");
  c.ablate.dropouts = r.reals("ablate_dropouts");
  for (double p : c.ablate.dropouts)
    if (!(p >= 0.0 && p < 1.0)) r.fail("ablate_dropouts", "dropout rates must lie in [0, 1)");
  c.ablate.modes.clear();
  for (const auto& m : r.list("ablate_modes")) c.ablate.modes.push_back(parse_mode(r, "ablate_modes", m));

  const auto& input = get("tsne_input");
  if (input != "features" && input != "centroids") r.fail("tsne_input", "expected features or centroids");
  c.tsne_centroids = input == "centroids";
  c.tsne.perplexity = r.real("tsne_perplexity");
  c.tsne.learning_rate = r.real("tsne_lr");
  c.tsne.iterations = r.count("tsne_iterations");
  c.tsne.exaggeration = r.real("tsne_exaggeration");
  c.tsne.exaggeration_iters = r.count("tsne_exaggeration_iters");
  c.tsne.seed = r.seed("tsne_seed");
  r.check("tsne", [&] { c.tsne.validate(); });

  c.attmap_count = r.count("attmap_count");
  if (c.attmap_count == 0) r.fail("attmap_count", "must be >= 1");
  return c;
}

}  // namespace lsvt
