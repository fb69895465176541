#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "somgan_cli_tests";

const char* kConfig = R"({
  "version": 1, "seed": 5, "trials": 2,
  "som": {"rows": 4, "cols": 4, "epochs": 3},
  "membership": {"epochs": 20},
  "ssgan": {"epochs": 2, "batch_size": 32, "noise_dim": 8, "generator_hidden": [16, 16],
            "spectral_path": [16, 8], "som_path": [8, 8]},
  "synth": {"bands": 16, "counts": {"labeled_per_class": 5, "labeled_outliers": 5, "unlabeled_per_class": 30,
            "unlabeled_outliers": 40, "test_per_class": 20, "test_outliers_per_family": 10}}
})";

int run(const std::string& args) {
  const std::string cmd = std::string(SOMGAN_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path config_file() {
  fs::create_directories(kRoot);
  const fs::path p = kRoot / "config.json";
  std::ofstream(p) << kConfig;
  return p;
}

std::string base(const fs::path& out) {
  return "--config " + config_file().string() + " --out " + out.string();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::size_t line_count(const fs::path& p) {
  const auto s = slurp(p);
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

std::map<std::string, std::string> tree(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename() != "config.json")
      out[fs::relative(e.path(), dir).string()] = slurp(e.path());
  return out;
}

// synth + train + eval on one output directory; returns the first failing exit code.
int pipeline(const fs::path& out, const std::string& extra = "") {
  fs::remove_all(out);
  for (const char* cmd : {"synth", "train", "eval"})
    if (const int rc = run(std::string(cmd) + " " + base(out) + " " + extra)) return rc;
  return 0;
}

std::string common_prefix(const fs::path& out) { return "classify-map " + base(out) + " --raster "; }

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("grad-check succeeds") { CHECK(run("grad-check") == 0); }

TEST_CASE("end-to-end run writes the documented artifacts") {
  const fs::path out = kRoot / "e2e";
  REQUIRE(pipeline(out) == 0);
  for (const char* f : {"config.json", "scene.json", "trial-00/labeled.csv", "trial-01/test.csv",
                        "trial-00/unlabeled_truth.csv", "trial-00/som/weights.csv", "trial-00/som/sigmoids.csv",
                        "trial-00/som/histogram.csv", "trial-00/som/sigmoid_loss.csv",
                        "trial-01/models/semi-spectra-som/model.ckpt", "trial-01/models/sup-spectra/manifest.json",
                        "eval/summary.json", "eval/summary.txt", "eval/semi-spectra-som/roc_mean.csv",
                        "eval/sup-spectra-som/reliability_mean.csv", "eval/semi-spectra/trial-00_roc.csv"})
    CHECK_MESSAGE(fs::exists(out / f), f);
  for (const char* t : {"sup-spectra", "sup-spectra-som", "semi-spectra", "semi-spectra-som"})
    CHECK(line_count(out / "trial-00/models" / t / "loss.csv") == 3);  // header + 2 epochs
  CHECK(line_count(out / "trial-00/som/sigmoid_loss.csv") == 22);
  CHECK_FALSE(fs::exists(out / "eval/roc.svg"));
  {
    const auto j = nlohmann::json::parse(slurp(out / "eval/summary.json"));
    const auto& models = j.at("models");
    REQUIRE(models.size() == 4);
    std::size_t i = 0;
    for (const char* t : {"sup-spectra", "sup-spectra-som", "semi-spectra", "semi-spectra-som"}) {
      const auto& e = models.at(i++);
      CHECK(e.at("model_type") == t);
      CHECK(e.at("auc").at("ci").size() == 2);
      CHECK(e.at("top_classification_rate").at("ci").size() == 2);
      CHECK(e.at("auc").at("ci")[0].get<double>() <= e.at("auc").at("mean").get<double>());
    }
  }
  CHECK(run("eval " + base(out) + " --plots") == 0);
  CHECK(fs::exists(out / "eval/roc.svg"));
  CHECK(fs::exists(out / "eval/reliability.svg"));
  CHECK(slurp(out / "eval/roc.svg").find("<svg") != std::string::npos);
}

TEST_CASE("reruns are byte identical and independent of --jobs") {
  const fs::path a = kRoot / "rerun-a", b = kRoot / "rerun-b", c = kRoot / "rerun-c";
  REQUIRE(pipeline(a) == 0);
  REQUIRE(pipeline(b) == 0);
  REQUIRE(pipeline(c, "--jobs 2") == 0);
  const auto ta = tree(a);
  CHECK(ta.size() > 20);
  CHECK(ta == tree(b));
  CHECK(ta == tree(c));
  const fs::path d = kRoot / "rerun-d";
  REQUIRE(pipeline(d, "--seed 6") == 0);
  CHECK_FALSE(slurp(a / "trial-00/test.csv") == slurp(d / "trial-00/test.csv"));
}

TEST_CASE("trial count flag") {
  const fs::path out = kRoot / "ten";
  fs::remove_all(out);
  REQUIRE(run("synth " + base(out) + " --trials 10") == 0);
  std::size_t dirs = 0;
  for (const auto& e : fs::directory_iterator(out)) dirs += e.is_directory() && e.path().filename().string().rfind("trial-", 0) == 0;
  CHECK(dirs == 10);
  CHECK(fs::exists(out / "trial-09/test.csv"));
}

TEST_CASE("default trial count") {
  const fs::path out = kRoot / "twenty";
  fs::remove_all(out);
  const fs::path cfg = kRoot / "counts.json";
  std::ofstream(cfg) << R"({"version": 1, "synth": {"counts": {"labeled_per_class": 2, "labeled_outliers": 2,
    "unlabeled_per_class": 2, "unlabeled_outliers": 4, "test_per_class": 2, "test_outliers_per_family": 1}}})";
  REQUIRE(run("synth --config " + cfg.string() + " --out " + out.string()) == 0);
  std::size_t dirs = 0;
  for (const auto& e : fs::directory_iterator(out)) dirs += e.is_directory();
  CHECK(dirs == 20);
}

TEST_CASE("spectra-only runs write no SOM artifacts") {
  const fs::path out = kRoot / "spectra";
  REQUIRE(pipeline(out, "--model-type sup-spectra --model-type semi-spectra") == 0);
  CHECK_FALSE(fs::exists(out / "trial-00/som"));
  CHECK(fs::exists(out / "trial-00/models/semi-spectra/model.ckpt"));
  CHECK_FALSE(fs::exists(out / "trial-00/models/semi-spectra-som"));
  CHECK(fs::exists(out / "eval/sup-spectra/roc_mean.csv"));
}

TEST_CASE("error categories map to exit codes") {
  const fs::path out = kRoot / "errors";
  fs::remove_all(out);
  CHECK(run("bogus") == 2);
  CHECK(run("train " + base(out)) == 3);  // no split yet
  REQUIRE(run("synth " + base(out)) == 0);
  CHECK(run("eval " + base(out) + " --trials 1") == 8);
  CHECK(run("eval " + base(out)) == 3);  // no checkpoints
  CHECK(run("train " + base(out) + " --model-type semi") == 2);
  const fs::path bad = kRoot / "bad.json";
  std::ofstream(bad) << R"({"version": 1, "unknown_key": 1})";
  CHECK(run("synth --config " + bad.string() + " --out " + out.string()) == 2);
  std::ofstream(bad) << "{oops";
  CHECK(run("synth --config " + bad.string() + " --out " + out.string()) == 4);
  CHECK(run("som-export " + base(out)) == 0);
  CHECK(fs::exists(out / "trial-01/som/test_memberships.csv"));
  CHECK(line_count(out / "trial-01/som/test_memberships.csv") == 1 + 2 * 20 + 4 * 10);
}

TEST_CASE("classify-map") {
  const fs::path out = kRoot / "map";
  REQUIRE(pipeline(out, "--model-type semi-spectra-som") == 0);
  // Spectra of the test split without the label column.
  const fs::path raster = out / "raster.csv";
  std::size_t pixels = 0;
  {
    std::istringstream in(slurp(out / "trial-00/test.csv"));
    std::ofstream r(raster);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      r << line.substr(0, line.rfind(',')) << '\n';
      ++pixels;
    }
  }
  CHECK(run(common_prefix(out) + (out / "trial-00/test.csv").string() + " --tau 0") == 4);
  const std::string common = "classify-map " + base(out) + " --raster " + raster.string();
  REQUIRE(run(common + " --tau 0") == 0);
  {
    std::istringstream in(slurp(out / "classify_map.csv"));
    std::string line;
    std::getline(in, line);
    CHECK(line == "pixel,decision,outlier_votes,class0_votes,class1_votes");
    std::size_t rows = 0;
    while (std::getline(in, line)) {
      ++rows;
      CHECK(line.find(",outlier,2,0,0") != std::string::npos);
    }
    CHECK(rows == pixels);
  }
  REQUIRE(run(common + " --tau 1.5") == 0);
  CHECK(slurp(out / "classify_map.csv").find(",outlier,") == std::string::npos);
  CHECK(line_count(out / "classify_map_thresholds.csv") == 3);

  REQUIRE(run(common + " --reject-q 0.9 --calibration " + raster.string() + " --model " +
              (out / "trial-01/models/semi-spectra-som").string()) == 0);
  CHECK(line_count(out / "classify_map_thresholds.csv") == 2);

  CHECK(run(common + " --tau 0.5 --reject-q 0.9 --calibration " + raster.string()) == 2);
  CHECK(run(common) == 2);
  const fs::path narrow = kRoot / "narrow.csv";
  std::ofstream(narrow) << "0.1,0.2,0.3\n0.3,0.2,0.1\n";
  CHECK(run("classify-map " + base(out) + " --tau 0.5 --raster " + narrow.string()) == 5);
}

}
