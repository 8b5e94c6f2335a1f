#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lsvt/distill.hpp"
#include "lsvt/errors.hpp"
#include "lsvt/probe.hpp"
#include "lsvt/synthetic.hpp"
#include "lsvt/tsne.hpp"
#include "lsvt/vit.hpp"

namespace lsvt {

// A key that is not part of the schema; callers report it as a usage error.
class UnknownKeyError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

struct ConfigKey {
  std::string name;
  std::string default_value;
  std::string help;
};

// Every accepted key with its default, in snapshot order.
const std::vector<ConfigKey>& config_schema();

// Typed view of a RunConfig after presets and "auto" values are resolved.
struct ResolvedConfig {
  std::filesystem::path data_dir, run_dir, manifest, checkpoint;
  SyntheticSpec synth;
  ViTConfig model;
  DistillConfig distill;
  SplitSpec split;
  ProbeHyper probe;
  double probe_dropout = 0.0;
  ProbeMode probe_mode = ProbeMode::frozen;
  AblationGrid ablate;
  TsneConfig tsne;
  bool tsne_centroids = false;
  std::size_t attmap_count = 4;
};

// Flat `key = value` document. Blank lines and lines starting with '#' are ignored.
class RunConfig {
 public:
  RunConfig();  // all defaults

  static RunConfig from_file(const std::filesystem::path& path);
  static RunConfig from_text(std::string_view text, const std::string& origin = "<text>");

  // UnknownKeyError for keys outside the schema. Values are checked by resolve().
  void set(const std::string& key, const std::string& value);
  // "key=value" form used by --set.
  void apply_override(std::string_view assignment);
  const std::string& get(const std::string& key) const;

  // Parses and validates every value; ConfigError names the offending key.
  ResolvedConfig resolve() const;

  // Canonical text: every key in schema order, one per line. Loading it reproduces the config.
  std::string snapshot() const;

 private:
  std::vector<std::pair<std::string, std::string>> values_;
};

}  // namespace lsvt
