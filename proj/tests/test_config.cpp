#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "lsvt/config.hpp"

using namespace lsvt;

TEST_CASE("defaults resolve") {
  const auto c = RunConfig().resolve();
  CHECK(c.manifest == std::filesystem::path("data") / "manifest.csv");
  CHECK(c.checkpoint == std::filesystem::path("run") / "checkpoint.lsvt");
  CHECK(c.model.preset == "tiny");
  CHECK(c.model.proto_dim == 256);
  CHECK(c.distill.base_size == 32);
  CHECK(c.distill.global.size == 32);
  CHECK(c.distill.local.size == 16);
  CHECK(c.model.image_size == 32);
  CHECK(c.distill.ema_lambda == 0.9);
  CHECK(c.distill.centering);
  CHECK(c.ablate.fractions == std::vector<double>{0.065, 0.1, 0.25, 0.5, 0.75, 1.0});
  CHECK(c.ablate.dropouts == std::vector<double>{0.0, 0.1, 0.2, 0.5});
  CHECK(c.ablate.modes == std::vector<ProbeMode>{ProbeMode::frozen, ProbeMode::end_to_end});
  CHECK(c.synth.n_train == 200);
  CHECK(c.synth.n_test == 50);

  std::set<std::string> names;
  for (const auto& k : config_schema()) {
    CHECK(names.insert(k.name).second);
    CHECK(!k.help.empty());
  }
}

TEST_CASE("keys and values") {
  RunConfig cfg;
  CHECK_THROWS_AS(cfg.set("no_such_key", "1"), UnknownKeyError);
  CHECK_THROWS_AS(cfg.apply_override("tau_t"), UnknownKeyError);
  CHECK_THROWS_AS(cfg.get("nope"), UnknownKeyError);

  cfg.apply_override("tau_t = 0.07");
  CHECK(cfg.get("tau_t") == "0.07");
  CHECK(cfg.resolve().distill.tau_t == 0.07);

  const auto rejects = [](const std::string& key, const std::string& value) {
    RunConfig c;
    c.set(key, value);
    try {
      c.resolve();
      return false;
    } catch (const UnknownKeyError&) {
      return false;
    } catch (const ConfigError&) {
      return true;
    }
  };
  CHECK(rejects("tau_t", "-1"));
  CHECK(rejects("tau_t", "0.5"));  // above tau_s
  CHECK(rejects("epochs", "ten"));
  CHECK(rejects("epochs", "-3"));
  CHECK(rejects("centering", "maybe"));
  CHECK(rejects("ema", "hourly"));
  CHECK(rejects("optimizer", "adam"));
  CHECK(rejects("model_preset", "huge"));
  CHECK(rejects("synth_noise", "1.5"));
  CHECK(rejects("global_size", "20"));  // not a multiple of the patch size
  CHECK(rejects("ablate_fractions", "0.5,,1"));
  CHECK(rejects("ablate_fractions", "0,1"));
  CHECK(rejects("ablate_modes", "frozen,linear"));
  CHECK(rejects("tsne_input", "pixels"));
  CHECK(rejects("probe_dropout", "1"));
  CHECK(rejects("lr", "nan"));

  RunConfig bad;
  bad.set("tau_t", "-1");
  try {
    bad.resolve();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("tau") != std::string::npos);
  }
}

TEST_CASE("presets and auto values") {
  RunConfig cfg;
  cfg.set("base_size", "paper");
  auto c = cfg.resolve();
  CHECK(c.distill.base_size == 256);
  CHECK(c.distill.global.size == 256);
  CHECK(c.distill.local.size == 128);

  cfg.set("model_preset", "deit-b");
  c = cfg.resolve();
  CHECK(c.model.d_model == 768);
  CHECK(c.model.depth == 12);
  CHECK(c.model.image_size == 256);

  cfg = RunConfig();
  cfg.set("ema", "per_step");
  CHECK(cfg.resolve().distill.ema_lambda == 0.996);
  cfg.set("ema_lambda", "0.5");
  CHECK(cfg.resolve().distill.ema_lambda == 0.5);
  cfg.set("manifest", "elsewhere.csv");
  CHECK(cfg.resolve().manifest == "elsewhere.csv");
}

TEST_CASE("text format") {
  const auto cfg = RunConfig::from_text("# comment\n\n  epochs = 3 \nlr=0.2\r\ntsne_input = centroids\n", "a.cfg");
  CHECK(cfg.get("epochs") == "3");
  CHECK(cfg.get("lr") == "0.2");
  CHECK(cfg.resolve().tsne_centroids);

  try {
    RunConfig::from_text("epochs = 3\nbogus = 1\n", "b.cfg");
    FAIL("expected UnknownKeyError");
  } catch (const UnknownKeyError& e) {
    CHECK(std::string(e.what()).find("b.cfg:2") != std::string::npos);
  }
  CHECK_THROWS_AS(RunConfig::from_text("epochs 3\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_file("/nonexistent/x.cfg"), ConfigError);

  SUBCASE("snapshot round trip") {
    RunConfig a;
    a.set("lr", "0.123");
    a.set("ablate_modes", "frozen");
    a.set("synth_dataset", "demo");
    const auto text = a.snapshot();
    const auto b = RunConfig::from_text(text);
    CHECK(b.snapshot() == text);
    std::size_t lines = 0;
    for (char ch : text) lines += ch == '\n';
    CHECK(lines == config_schema().size());

    const auto path = std::filesystem::temp_directory_path() / "lsvt_test_config.cfg";
    std::ofstream(path, std::ios::binary) << text;
    CHECK(RunConfig::from_file(path).snapshot() == text);
    std::filesystem::remove(path);

    // Default snapshot values parse back to the exact struct defaults.
    const auto r = RunConfig::from_text(RunConfig().snapshot()).resolve();
    CHECK(r.distill.tau_t == DistillConfig{}.tau_t);
    CHECK(r.synth.noise == SyntheticSpec{}.noise);
    CHECK(r.probe.weight_decay == ProbeHyper{}.weight_decay);
  }
}
