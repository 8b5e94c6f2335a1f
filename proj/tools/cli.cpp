#include "cli.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "lsvt/config.hpp"
#include "lsvt/distill.hpp"
#include "lsvt/errors.hpp"
#include "lsvt/image_io.hpp"
#include "lsvt/ops.hpp"
#include "lsvt/probe.hpp"
#include "lsvt/synthetic.hpp"
#include "lsvt/tsne.hpp"

namespace lsvt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write '" + path.string() + "'");
  out << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot read '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Dataset ids become file-name fragments.
std::string file_tag(const std::string& dataset) {
  std::string out = dataset;
  for (auto& ch : out)
    if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '_') ch = '_';
  return out;
}

// Config snapshot plus the seeds and versions needed to rerun the stage.
void write_record(const fs::path& dir, const std::string& stage, const RunConfig& cfg) {
  fs::create_directories(dir);
  write_text(dir / (stage + ".config"), cfg.snapshot());
  json record = {
      {"stage", stage},
      {"tool_version", kToolVersion},
      {"checkpoint_version", kCheckpointVersion},
      {"compiler", __VERSION__},
      {"config", stage + ".config"},
      {"seeds",
       {{"seed", cfg.get("seed")},
        {"synth_seed", cfg.get("synth_seed")},
        {"split_seed", cfg.get("split_seed")},
        {"probe_seed", cfg.get("probe_seed")},
        {"tsne_seed", cfg.get("tsne_seed")}}},
  };
  write_text(dir / (stage + ".record.json"), record.dump(2) + "\n");
}

// One dataset of the manifest, decoded, split and standardized.
struct DatasetData {
  std::string name;
  Manifest manifest;  // decodable records only
  SplitIndices splits;
  std::size_t classes = 0;
  std::vector<Image> raw;     // resized, unstandardized
  std::vector<Image> images;  // standardized
  std::vector<int> labels;

  std::vector<Image> pick(const std::vector<std::size_t>& idx) const {
    std::vector<Image> out;
    for (auto i : idx) out.push_back(images[i]);
    return out;
  }
  std::vector<int> pick_labels(const std::vector<std::size_t>& idx) const {
    std::vector<int> out;
    for (auto i : idx) out.push_back(labels[i]);
    return out;
  }
  ProbeData probe_data() const {
    return {pick(splits.train), pick(splits.val), pick(splits.test), pick_labels(splits.train),
            pick_labels(splits.val), pick_labels(splits.test), classes};
  }
};

std::vector<DatasetData> load_datasets(const ResolvedConfig& c, std::size_t base,
                                       const std::optional<ChannelStats>& stats) {
  const auto manifest = load_manifest(c.manifest);
  if (manifest.records.empty()) throw ContractError("manifest '" + c.manifest.string() + "' has no records");
  std::vector<DatasetData> out;
  for (const auto& name : manifest.datasets()) {
    const auto all = manifest.filter_dataset(name);
    auto loaded = load_resized(all, base);
    DatasetData d;
    d.name = name;
    d.manifest = all.subset(loaded.kept);
    d.splits = resolve_splits(d.manifest, c.split);
    d.classes = static_cast<std::size_t>(all.class_count(name));
    d.labels = d.manifest.labels();
    d.raw = loaded.images;
    if (stats) d.images = standardize_all(std::move(loaded), *stats).images;
    out.push_back(std::move(d));
  }
  return out;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// Stages

void stage_synth(const RunConfig& cfg, const ResolvedConfig& c, std::ostream& out) {
  const auto manifest = generate_synthetic(c.synth, c.data_dir);
  write_record(c.data_dir, "synth", cfg);
  out << "synth: wrote " << manifest.records.size() << " images to " << c.data_dir.string() << "\n";
}

void stage_pretrain(const RunConfig& cfg, const ResolvedConfig& c, std::ostream& out) {
  const auto t0 = std::chrono::steady_clock::now();
  write_record(c.run_dir, "pretrain", cfg);
  // Labels are never read here; train and validation images form the unlabeled pool.
  const auto datasets = load_datasets(c, c.distill.base_size, std::nullopt);
  std::vector<Image> pool;
  for (const auto& d : datasets) {
    for (const auto* part : {&d.splits.train, &d.splits.val})
      for (auto i : *part) pool.push_back(d.raw[i]);
  }
  const auto stats = compute_channel_stats(pool);
  for (auto& im : pool) im = standardize_image(im, im.height, stats);

  TrainerState state(c.model, c.distill, stats);
  std::string epochs = "epoch,mean_loss,teacher_entropy,steps,images\n";
  for (std::size_t e = 0; e < c.distill.epochs; ++e) {
    const auto s = train_epoch(state, pool);
    epochs += std::to_string(s.epoch) + "," + format_number(s.mean_loss) + "," + format_number(s.teacher_entropy) +
              "," + std::to_string(s.steps) + "," + std::to_string(s.images) + "\n";
    char line[160];
    std::snprintf(line, sizeof(line), "pretrain: epoch %zu/%zu loss %.4f teacher entropy %.4f (%.1fs)\n", e + 1,
                  c.distill.epochs, s.mean_loss, s.teacher_entropy, seconds_since(t0));
    out << line << std::flush;
  }
  write_text(c.run_dir / "pretrain_epochs.csv", epochs);
  write_loss_history_csv(state.history, c.run_dir / "loss_history.csv");
  if (c.checkpoint.has_parent_path()) fs::create_directories(c.checkpoint.parent_path());
  save_checkpoint(state, c.checkpoint);
  out << "pretrain: checkpoint " << c.checkpoint.string() << "\n";
}

json probe_to_json(const LinearProbe& p, const std::string& dataset, ProbeMode mode) {
  return {{"dataset", dataset},          {"mode", to_string(mode)},
          {"classes", p.classes},        {"dropout", p.dropout},
          {"shape", p.weight.shape()},   {"weight", p.weight.values()},
          {"bias", p.bias.values()}};
}

std::pair<LinearProbe, ProbeMode> probe_from_json(const fs::path& path) {
  try {
    const auto j = json::parse(read_text(path));
    const auto shape = j.at("shape").get<std::vector<std::size_t>>();
    LinearProbe p;
    p.classes = j.at("classes").get<std::size_t>();
    p.dropout = j.at("dropout").get<double>();
    p.weight = Tensor<double>(shape, j.at("weight").get<std::vector<double>>());
    p.bias = Tensor<double>({p.classes}, j.at("bias").get<std::vector<double>>());
    const auto mode = j.at("mode").get<std::string>() == "end_to_end" ? ProbeMode::end_to_end : ProbeMode::frozen;
    return {p, mode};
  } catch (const json::exception& e) {
    throw FormatError("probe file '" + path.string() + "': " + e.what());
  }
}

fs::path probe_path(const ResolvedConfig& c, const std::string& dataset) {
  return c.run_dir / ("probe_" + file_tag(dataset) + ".json");
}
fs::path backbone_path(const ResolvedConfig& c, const std::string& dataset) {
  return c.run_dir / ("backbone_" + file_tag(dataset) + ".lsvt");
}

void stage_probe(const RunConfig& cfg, const ResolvedConfig& c, std::ostream& out) {
  write_record(c.run_dir, "probe", cfg);
  const auto bundle = load_teacher(c.checkpoint);
  for (const auto& d : load_datasets(c, bundle.config.base_size, bundle.stats)) {
    const auto data = d.probe_data();
    ProbeResult r;
    if (c.probe_mode == ProbeMode::frozen) {
      const auto f = extract_features(bundle.teacher, d.images);
      r = train_probe({gather_rows(f, d.splits.train), data.train_labels}, {gather_rows(f, d.splits.val), data.val_labels},
                      d.classes, c.probe_dropout, c.probe);
    } else {
      r = train_probe_end_to_end(bundle.teacher, data.train_images, data.train_labels, data.val_images,
                                 data.val_labels, d.classes, c.probe_dropout, c.probe);
      // The fine-tuned backbone is stored as the teacher of a checkpoint so load_teacher reads it.
      TrainerState holder(r.backbone->config(), bundle.config, bundle.stats);
      holder.teacher = *r.backbone;
      save_checkpoint(holder, backbone_path(c, d.name));
    }
    write_text(probe_path(c, d.name), probe_to_json(r.probe, d.name, c.probe_mode).dump() + "\n");
    std::string history = "epoch,val_auc\n";
    for (std::size_t e = 0; e < r.val_auc_history.size(); ++e)
      history += std::to_string(e) + "," + format_number(r.val_auc_history[e]) + "\n";
    write_text(c.run_dir / ("probe_history_" + file_tag(d.name) + ".csv"), history);
    out << "probe: " << d.name << " " << to_string(c.probe_mode) << " best epoch " << r.best_epoch << " val AUC "
        << format_number(r.best_val_auc) << "\n";
  }
}

void stage_eval(const RunConfig& cfg, const ResolvedConfig& c, std::ostream& out) {
  write_record(c.run_dir, "eval", cfg);
  const auto bundle = load_teacher(c.checkpoint);
  std::vector<DatasetReport> rows;
  for (const auto& d : load_datasets(c, bundle.config.base_size, bundle.stats)) {
    const auto [probe, mode] = probe_from_json(probe_path(c, d.name));
    const auto backbone =
        mode == ProbeMode::end_to_end ? load_teacher(backbone_path(c, d.name)).teacher : bundle.teacher;
    const auto probs = predict(probe, backbone, d.pick(d.splits.test));
    rows.push_back({d.name, to_string(mode), macro_metrics(probs, d.pick_labels(d.splits.test))});
    write_confusion_csv(rows.back().metrics, c.run_dir / ("confusion_" + file_tag(d.name) + ".csv"));
    out << "eval: " << d.name << " test AUC " << format_number(rows.back().metrics.auc) << " accuracy "
        << format_number(rows.back().metrics.accuracy) << " F1 " << format_number(rows.back().metrics.f1) << "\n";
  }
  write_metrics_csv(rows, c.run_dir / "metrics.csv");
  write_report_json(rows, c.run_dir / "report.json");
}

void stage_ablate(const RunConfig& cfg, const ResolvedConfig& c, std::ostream& out) {
  write_record(c.run_dir, "ablate", cfg);
  const auto bundle = load_teacher(c.checkpoint);
  for (const auto& d : load_datasets(c, bundle.config.base_size, bundle.stats)) {
    const auto cells = ablation_sweep(bundle.teacher, d.probe_data(), c.ablate, c.probe);
    const auto path = c.run_dir / ("ablation_" + file_tag(d.name) + ".csv");
    write_ablation_csv(cells, path);
    out << "ablate: " << d.name << " " << cells.size() << " cells -> " << path.string() << "\n";
  }
}

void stage_tsne(const RunConfig& cfg, const ResolvedConfig& c, std::ostream& out) {
  write_record(c.run_dir, "tsne", cfg);
  const auto bundle = load_teacher(c.checkpoint);
  std::vector<Tensor<double>> parts;
  std::vector<std::string> names;
  std::vector<int> classes;
  for (const auto& d : load_datasets(c, bundle.config.base_size, bundle.stats)) {
    const auto f = extract_features(bundle.teacher, d.images);
    if (c.tsne_centroids) {
      parts.push_back(class_centroids(f, d.labels, d.classes));
      for (std::size_t k = 0; k < d.classes; ++k) {
        names.push_back(d.name);
        classes.push_back(static_cast<int>(k));
      }
    } else {
      parts.push_back(f);
      names.insert(names.end(), d.labels.size(), d.name);
      classes.insert(classes.end(), d.labels.begin(), d.labels.end());
    }
  }
  const auto result = tsne_embed(concat_rows(parts), c.tsne);
  write_embedding_csv(result.y, names, classes, c.run_dir / "tsne.csv");
  render_scatter_png(result.y, classes, c.run_dir / "tsne.png");
  std::string kl = "iteration,kl\n";
  for (std::size_t i = 0; i < result.kl_history.size(); ++i)
    kl += std::to_string(i) + "," + format_number(result.kl_history[i]) + "\n";
  write_text(c.run_dir / "tsne_kl.csv", kl);
  out << "tsne: " << result.y.rows() << " points, final KL " << format_number(result.kl_history.back()) << "\n";
}

void stage_attmap(const RunConfig& cfg, const ResolvedConfig& c, std::ostream& out) {
  write_record(c.run_dir, "attmap", cfg);
  const auto bundle = load_teacher(c.checkpoint);
  const auto dir = c.run_dir / "attmap";
  fs::create_directories(dir);
  for (const auto& d : load_datasets(c, bundle.config.base_size, bundle.stats)) {
    const std::size_t count = std::min(c.attmap_count, d.splits.test.size());
    for (std::size_t k = 0; k < count; ++k) {
      const auto i = d.splits.test[k];
      const auto map = extract_attention_map(bundle.teacher, d.images[i]);
      char stem[64];
      std::snprintf(stem, sizeof(stem), "_%02zu", k);
      const auto base = file_tag(d.name) + stem;
      write_heatmap_png(map, dir / (base + ".png"));
      write_heatmap_csv(map, dir / (base + ".csv"));
      write_png(dir / (base + "_overlay.png"), heatmap_overlay(to_raw(d.raw[i]), map));
    }
    out << "attmap: " << d.name << " " << count << " maps -> " << dir.string() << "\n";
  }
}

void list_keys(std::ostream& out) {
  for (const auto& k : config_schema()) out << k.name << " = " << k.default_value << "    # " << k.help << "\n";
}

std::string error_kind(const std::exception& e) {
  if (dynamic_cast<const UnknownKeyError*>(&e) || dynamic_cast<const UsageError*>(&e)) return "usage";
  if (dynamic_cast<const ConfigError*>(&e)) return "config";
  if (dynamic_cast<const FormatError*>(&e)) return "format";
  if (dynamic_cast<const ShapeError*>(&e)) return "shape";
  if (dynamic_cast<const DomainError*>(&e)) return "domain";
  if (dynamic_cast<const ContractError*>(&e)) return "contract";
  if (dynamic_cast<const fs::filesystem_error*>(&e)) return "io";
  return "internal";
}

std::string one_line(std::string s) {
  for (auto& ch : s)
    if (ch == '\n' || ch == '\r') ch = ' ';
  return s;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  using Stage = void (*)(const RunConfig&, const ResolvedConfig&, std::ostream&);
  const std::vector<std::tuple<std::string, std::string, Stage>> stages = {
      {"synth", "generate the synthetic dataset and its manifest", stage_synth},
      {"pretrain", "self-distillation pretraining; writes the checkpoint", stage_pretrain},
      {"probe", "train a linear probe per dataset on the teacher features", stage_probe},
      {"eval", "evaluate saved probes on the test split", stage_eval},
      {"ablate", "label-fraction x dropout x mode probe sweep", stage_ablate},
      {"tsne", "t-SNE of teacher features or class centroids", stage_tsne},
      {"attmap", "final-layer attention heatmaps for test images", stage_attmap},
  };

  CLI::App app{"Self-distilled vision transformer toolkit", "lsvt"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);
  std::string config_path;
  std::vector<std::string> overrides;
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, help, fn] : stages) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "flat key = value config file");
    sub->add_option("--set", overrides, "override one key (key=value); repeatable")->allow_extra_args(false);
    subs[name] = sub;
  }
  auto* keys = app.add_subcommand("keys", "list every config key with its default");

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kToolVersion << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << one_line(e.what()) << "\n";
    return kExitUsage;
  }

  try {
    if (keys->parsed()) {
      list_keys(out);
      return kExitOk;
    }
    RunConfig cfg = config_path.empty() ? RunConfig() : RunConfig::from_file(config_path);
    for (const auto& o : overrides) cfg.apply_override(o);
    const auto resolved = cfg.resolve();  // every value is checked before any work starts
    for (const auto& [name, help, fn] : stages) {
      if (subs.at(name)->parsed()) fn(cfg, resolved, out);
    }
    return kExitOk;
  } catch (const std::exception& e) {
    const auto kind = error_kind(e);
    err << "error: " << kind << ": " << one_line(e.what()) << "\n";
    if (kind == "usage") return kExitUsage;
    if (kind == "config") return kExitConfig;
    return kExitFailure;
  }
}

}  // namespace lsvt
