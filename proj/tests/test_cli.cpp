#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "doctest.h"
#include "lsvt/image_io.hpp"
#include "lsvt/vit.hpp"

using namespace lsvt;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Small enough for a few seconds per stage.
std::string smoke_config(const fs::path& root, const std::string& run) {
  return "data_dir = " + (root / "data").string() + "\nrun_dir = " + (root / run).string() +
         "\nsynth_train = 24\nsynth_test = 12\nepochs = 2\nbatch_size = 8\nn_local = 2\n"
         "probe_epochs = 20\ne2e_epochs = 2\nablate_fractions = 0.5,1\nablate_dropouts = 0,0.2\n"
         "tsne_perplexity = 5\ntsne_iterations = 100\ntsne_exaggeration_iters = 30\nattmap_count = 2\n";
}

std::vector<std::string> csv_files(const fs::path& dir) {
  std::vector<std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.path().extension() == ".csv") out.push_back(fs::relative(e.path(), dir).string());
  std::sort(out.begin(), out.end());
  return out;
}

bool single_line(const std::string& s) { return !s.empty() && s.find('\n') == s.size() - 1; }

}  // namespace

TEST_CASE("usage and config errors") {
  auto r = cli({"frobnicate"});
  CHECK(r.code == kExitUsage);
  CHECK(single_line(r.err));
  CHECK(r.err.rfind("error: usage: ", 0) == 0);

  CHECK(cli({}).code == kExitUsage);
  CHECK(cli({"probe", "--bogus"}).code == kExitUsage);

  const auto root = fs::temp_directory_path() / "lsvt_test_cli_errors";
  fs::remove_all(root);
  r = cli({"pretrain", "--set", "no_such_key=1", "--set", "run_dir=" + (root / "run").string()});
  CHECK(r.code == kExitUsage);
  CHECK(single_line(r.err));
  CHECK(r.err.find("no_such_key") != std::string::npos);

  // Validation happens before any work: the run directory is never created.
  r = cli({"pretrain", "--set", "tau_t=-1", "--set", "run_dir=" + (root / "run").string()});
  CHECK(r.code == kExitConfig);
  CHECK(single_line(r.err));
  CHECK(r.err.rfind("error: config: ", 0) == 0);
  CHECK_FALSE(fs::exists(root / "run"));

  r = cli({"eval", "--config", (root / "missing.cfg").string()});
  CHECK(r.code == kExitConfig);
  CHECK(single_line(r.err));

  // A missing checkpoint is a runtime failure, reported on one line.
  r = cli({"probe", "--set", "checkpoint=" + (root / "none.lsvt").string(), "--set",
           "run_dir=" + (root / "run").string()});
  CHECK(r.code == kExitFailure);
  CHECK(single_line(r.err));

  r = cli({"keys"});
  CHECK(r.code == kExitOk);
  CHECK(r.out.find("tau_t = 0.04") != std::string::npos);
  CHECK(cli({"--help"}).code == kExitOk);
  fs::remove_all(root);
}

TEST_CASE("stage pipeline and reruns") {
  const auto root = fs::temp_directory_path() / "lsvt_test_cli";
  fs::remove_all(root);
  fs::create_directories(root);
  for (const std::string run : {"a", "b"}) {
    std::ofstream(root / (run + ".cfg")) << smoke_config(root, run);
  }

  const std::vector<std::string> stages = {"synth", "pretrain", "probe", "eval", "ablate", "tsne", "attmap"};
  for (const std::string run : {"a", "b"}) {
    for (const auto& stage : stages) {
      const auto r = cli({stage, "--config", (root / (run + ".cfg")).string()});
      INFO(stage << ": " << r.err);
      REQUIRE(r.code == kExitOk);
      CHECK(r.err.empty());
    }
  }

  const auto a = root / "a", b = root / "b";
  for (const auto& stage : stages) {
    const auto dir = stage == "synth" ? root / "data" : a;
    CHECK(fs::exists(dir / (stage + ".config")));
    CHECK(fs::exists(dir / (stage + ".record.json")));
  }
  for (const auto* f : {"metrics.csv", "report.json", "confusion_synthetic.csv", "ablation_synthetic.csv",
                        "tsne.csv", "tsne.png", "loss_history.csv", "pretrain_epochs.csv", "checkpoint.lsvt",
                        "attmap/synthetic_00.png", "attmap/synthetic_01_overlay.png"}) {
    CHECK_MESSAGE(fs::exists(a / f), f);
  }

  SUBCASE("independent reruns write byte-identical reports") {
    const auto files = csv_files(a);
    CHECK(files == csv_files(b));
    CHECK(files.size() >= 8);
    for (const auto& f : files) CHECK_MESSAGE(slurp(a / f) == slurp(b / f), f);
    CHECK(slurp(a / "checkpoint.lsvt") == slurp(b / "checkpoint.lsvt"));
  }
  SUBCASE("rerunning eval in place reproduces the report") {
    const auto before = slurp(a / "metrics.csv");
    REQUIRE(cli({"eval", "--config", (root / "a.cfg").string()}).code == kExitOk);
    CHECK(slurp(a / "metrics.csv") == before);
  }
  SUBCASE("snapshot reproduces the stage") {
    const auto snap = a / "probe.config";
    auto r = cli({"probe", "--config", snap.string(), "--set", "run_dir=" + (root / "c").string(), "--set",
                  "checkpoint=" + (a / "checkpoint.lsvt").string()});
    REQUIRE(r.code == kExitOk);
    CHECK(slurp(root / "c" / "probe_history_synthetic.csv") == slurp(a / "probe_history_synthetic.csv"));
  }
  SUBCASE("end-to-end probes evaluate with their own backbone") {
    const auto cfg = (root / "a.cfg").string();
    REQUIRE(cli({"probe", "--config", cfg, "--set", "probe_mode=end_to_end"}).code == kExitOk);
    CHECK(fs::exists(a / "backbone_synthetic.lsvt"));
    REQUIRE(cli({"eval", "--config", cfg}).code == kExitOk);
    CHECK(slurp(a / "metrics.csv").find("synthetic,end_to_end,12,") != std::string::npos);
  }
  SUBCASE("heatmap exports agree") {
    const auto png = decode_image(a / "attmap" / "synthetic_00.png");
    const auto csv = read_heatmap_csv(a / "attmap" / "synthetic_00.csv");
    REQUIRE(png.pixels.size() == csv.values.size());
    for (std::size_t i = 0; i < csv.values.size(); ++i) CHECK(std::abs(png.pixels[i] / 255.0 - csv.values[i]) <= 1.0 / 255);
  }
  fs::remove_all(root);
}
