#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "somgan/config.hpp"
#include "somgan/core.hpp"
#include "somgan/error.hpp"
#include "somgan/eval.hpp"
#include "somgan/gradcheck.hpp"
#include "somgan/model_io.hpp"
#include "somgan/pipeline.hpp"
#include "somgan/report.hpp"
#include "somgan/som.hpp"
#include "somgan/synth.hpp"

namespace fs = std::filesystem;
using namespace somgan;

namespace {

struct Flags {
  std::string config;
  std::uint64_t seed = 0;
  std::size_t trials = 0;
  std::size_t jobs = 0;
  std::vector<std::string> model_types;
  bool plots = false;
  std::string out;

  CLI::Option* seed_opt = nullptr;
  CLI::Option* trials_opt = nullptr;
  CLI::Option* jobs_opt = nullptr;
  CLI::Option* out_opt = nullptr;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "RunConfig JSON file")->check(CLI::ExistingFile);
  f.seed_opt = cmd->add_option("--seed", f.seed, "master seed");
  f.trials_opt = cmd->add_option("--trials", f.trials, "number of trials");
  f.jobs_opt = cmd->add_option("--jobs", f.jobs, "worker threads across trials");
  cmd->add_option("--model-type", f.model_types,
                  "sup-spectra | sup-spectra-som | semi-spectra | semi-spectra-som (repeatable)");
  cmd->add_flag("--plots", f.plots, "also write SVG plots");
  f.out_opt = cmd->add_option("--out", f.out, "output directory");
}

RunConfig resolve(const Flags& f) {
  RunConfig cfg = f.config.empty() ? RunConfig{} : load_run_config(f.config);
  if (f.seed_opt->count()) cfg.seed = f.seed;
  if (f.trials_opt->count()) cfg.trials = f.trials;
  if (f.jobs_opt->count()) cfg.jobs = f.jobs;
  if (f.out_opt->count()) cfg.out = f.out;
  if (!f.model_types.empty()) {
    cfg.model_types.clear();
    for (const auto& name : f.model_types) {
      const ModelType t = parse_model_type(name);
      if (std::find(cfg.model_types.begin(), cfg.model_types.end(), t) == cfg.model_types.end())
        cfg.model_types.push_back(t);
    }
  }
  cfg.validate();
  return cfg;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  ensure_dir(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorKind::Io, "write failed for " + path.string());
}

fs::path trial_dir(const RunConfig& cfg, std::size_t i) {
  char name[32];
  std::snprintf(name, sizeof name, "trial-%02zu", i);
  return fs::path(cfg.out) / name;
}

synth::ExperimentSplit load_trial_split(const RunConfig& cfg, std::size_t i) {
  const fs::path dir = trial_dir(cfg, i);
  if (!fs::exists(dir / "labeled.csv"))
    fail(ErrorKind::Io, "no split in " + dir.string() + " (run `somgan synth` first)");
  auto split = synth::load_split(dir, cfg.synth.classes);
  split.trial_seed = trial_seed(cfg.seed, i);
  if (split.labeled.spectra.cols() != cfg.synth.bands)
    fail(ErrorKind::Dimension, dir.string() + ": band count differs from synth.bands");
  return split;
}

std::string loss_trace_csv(const std::vector<EpochLosses>& history) {
  std::string s = "epoch,supervised,unsupervised,discriminator_total,feature_matching\n";
  for (std::size_t e = 0; e < history.size(); ++e) {
    const auto& h = history[e];
    s += std::to_string(e + 1) + "," + format_double(h.supervised) + "," + format_double(h.unsupervised) + "," +
         format_double(h.discriminator_total) + "," + format_double(h.feature_matching) + "\n";
  }
  return s;
}

void write_som_artifacts(const RunConfig& cfg, const SomFitResult& som, const synth::ExperimentSplit& split,
                         const fs::path& dir) {
  ensure_dir(dir);
  const auto& p = som.pipeline;
  save_som_weights_csv(p.grid, dir / "weights.csv");
  save_sigmoids_csv(p.sigmoids, dir / "sigmoids.csv");
  std::string trace = "epoch,objective\n";
  for (std::size_t e = 0; e < som.sigmoid_loss.size(); ++e)
    trace += std::to_string(e) + "," + format_double(som.sigmoid_loss[e]) + "\n";
  write_text(dir / "sigmoid_loss.csv", trace);

  // BMU histogram of the test partition, one column per class plus outliers.
  const std::size_t k = cfg.synth.classes;
  std::vector<std::vector<std::size_t>> rows(k + 1);
  for (std::size_t i = 0; i < split.test.size(); ++i) {
    const auto& t = split.test.truth[i];
    rows[t.is_inlier() ? static_cast<std::size_t>(t.class_index()) : k].push_back(i);
  }
  std::vector<Matrix> per_class;
  std::vector<std::string> names;
  for (std::size_t c = 0; c <= k; ++c) {
    per_class.push_back(split.test.spectra.gather_rows(rows[c]));
    names.push_back(c < k ? "class" + std::to_string(c) : "outlier");
  }
  save_histogram_csv(p.grid, bmu_histogram(p.grid, p.stats, per_class, cfg.som.target_metric, p.angle_weight), names,
                     dir / "histogram.csv");
}

int cmd_synth(const Flags& f) {
  const RunConfig cfg = resolve(f);
  const synth::Scene scene = cfg.scene();
  ensure_dir(cfg.out);
  write_text(fs::path(cfg.out) / "config.json", run_config_to_json(cfg));
  write_text(fs::path(cfg.out) / "scene.json", synth::scene_to_json(scene));
  parallel_for(cfg.trials, cfg.jobs, [&](std::size_t i) {
    synth::save_split(synth::make_split(scene, cfg.synth.counts, trial_seed(cfg.seed, i)), trial_dir(cfg, i));
  });
  std::printf("wrote %zu trial splits to %s\n", cfg.trials, cfg.out.c_str());
  return 0;
}

int cmd_train(const Flags& f) {
  const RunConfig cfg = resolve(f);
  write_text(fs::path(cfg.out) / "config.json", run_config_to_json(cfg));
  std::mutex io;
  parallel_for(cfg.trials, cfg.jobs, [&](std::size_t i) {
    const fs::path dir = trial_dir(cfg, i);
    const TrialArtifacts t = train_trial(cfg, load_trial_split(cfg, i), i);
    if (t.som) write_som_artifacts(cfg, *t.som, t.split, dir / "som");
    for (const auto& [type, result] : t.models) {
      const fs::path mdir = dir / "models" / std::string(model_type_name(type));
      save_model(result.model, type, mdir);
      write_text(mdir / "loss.csv", loss_trace_csv(result.history));
    }
    std::lock_guard lock(io);
    std::printf("trial %zu: trained %zu model(s)\n", i, t.models.size());
  });
  return 0;
}

std::vector<report::Series> curve_series(const std::map<ModelType, eval::TrialSummary>& summaries, bool accuracy) {
  std::vector<report::Series> out;
  for (const auto& [type, s] : summaries) {
    report::Series series;
    series.name = std::string(model_type_name(type));
    series.x = s.grid;
    for (const auto& m : accuracy ? s.accuracy : s.detection) {
      series.mean.push_back(m.mean);
      series.lo.push_back(eval::clamp_unit(m.lo));
      series.hi.push_back(eval::clamp_unit(m.hi));
    }
    out.push_back(std::move(series));
  }
  return out;
}

int cmd_eval(const Flags& f) {
  const RunConfig cfg = resolve(f);
  if (cfg.trials < 2) fail(ErrorKind::Precondition, "eval needs at least 2 trials for confidence intervals");
  const fs::path edir = fs::path(cfg.out) / "eval";
  std::vector<std::map<ModelType, ModelEvaluation>> trials(cfg.trials);
  parallel_for(cfg.trials, cfg.jobs, [&](std::size_t i) {
    const auto split = load_trial_split(cfg, i);
    char tag[32];
    std::snprintf(tag, sizeof tag, "trial-%02zu", i);
    for (auto type : cfg.model_types) {
      const std::string name(model_type_name(type));
      const fs::path mdir = trial_dir(cfg, i) / "models" / name;
      if (!fs::exists(mdir / "model.ckpt")) fail(ErrorKind::Io, "missing checkpoint " + mdir.string());
      const SsganModel model = load_model(mdir);
      auto e = evaluate_model(model, split.test, cfg.eval.top_rate_max_false_alarm);
      write_text(edir / name / (std::string(tag) + "_roc.csv"), eval::format_roc_csv(e.roc));
      write_text(edir / name / (std::string(tag) + "_reliability.csv"), eval::format_reliability_csv(e.reliability));
      trials[i][type] = std::move(e);
    }
  });
  const auto summaries = summarize(cfg, trials);
  for (const auto& [type, s] : summaries) {
    const fs::path mdir = edir / std::string(model_type_name(type));
    write_text(mdir / "roc_mean.csv", eval::format_roc_summary_csv(s));
    write_text(mdir / "reliability_mean.csv", eval::format_reliability_summary_csv(s));
  }
  write_text(edir / "summary.json", summary_json(cfg, summaries));
  const std::string table = summary_table(summaries);
  write_text(edir / "summary.txt", table);
  if (f.plots) {
    write_text(edir / "roc.svg", report::line_chart_svg("Mean ROC", "false alarm rate", "detection rate",
                                                        curve_series(summaries, false)));
    write_text(edir / "reliability.svg",
               report::line_chart_svg("Reliability", "false alarm rate", "classification rate",
                                      curve_series(summaries, true), 0.2));
  }
  std::fputs(table.c_str(), stdout);
  return 0;
}

struct MapFlags {
  std::string raster;
  std::vector<std::string> models;
  double tau = -1.0;
  double reject_q = 0.0;
  std::string calibration;
  CLI::Option* tau_opt = nullptr;
  CLI::Option* q_opt = nullptr;
};

int cmd_classify_map(const Flags& f, const MapFlags& m, bool type_given) {
  RunConfig cfg = resolve(f);
  std::vector<fs::path> dirs(m.models.begin(), m.models.end());
  if (dirs.empty()) {
    const ModelType type = type_given ? cfg.model_types.front() : ModelType::SemiSpectraSom;
    for (std::size_t i = 0; i < cfg.trials; ++i)
      dirs.push_back(trial_dir(cfg, i) / "models" / std::string(model_type_name(type)));
  }
  if (m.tau_opt->count() == m.q_opt->count())
    fail(ErrorKind::Config, "classify-map needs exactly one of --tau or --reject-q");
  if (m.q_opt->count() && m.calibration.empty())
    fail(ErrorKind::Config, "--reject-q needs --calibration with outlier spectra");

  const Matrix raster = load_spectra_csv(m.raster);
  const std::optional<Matrix> calib =
      m.calibration.empty() ? std::nullopt : std::optional<Matrix>(load_spectra_csv(m.calibration));

  std::vector<std::vector<eval::Decision>> votes(raster.rows());
  std::string thresholds = "model,tau\n";
  for (const auto& dir : dirs) {
    const SsganModel model = load_model(dir);
    if (model.band_count() != raster.cols())
      fail(ErrorKind::Dimension, "raster has " + std::to_string(raster.cols()) + " bands, model " + dir.string() +
                                     " expects " + std::to_string(model.band_count()));
    double tau = m.tau;
    if (calib) {
      if (calib->cols() != model.band_count()) fail(ErrorKind::Dimension, "calibration band count mismatch");
      tau = eval::threshold_for_outlier_rejection(outlier_scores(model.logits(*calib)), m.reject_q);
    }
    thresholds += dir.string() + "," + format_double(tau) + "\n";
    const Matrix logits = model.logits(raster);
    const auto scores = outlier_scores(logits);
    const auto classes = inlier_classes(logits);
    for (std::size_t i = 0; i < raster.rows(); ++i) votes[i].push_back(eval::decide(scores[i], tau, classes[i]));
  }

  const std::size_t k = cfg.synth.classes;
  std::string out = "pixel,decision,outlier_votes";
  for (std::size_t c = 0; c < k; ++c) out += ",class" + std::to_string(c) + "_votes";
  out += "\n";
  for (std::size_t i = 0; i < raster.rows(); ++i) {
    std::vector<std::size_t> count(k + 1, 0);
    for (const auto& v : votes[i]) ++count[v.outlier ? k : v.class_index];
    const auto d = eval::majority_vote(votes[i], k);
    out += std::to_string(i) + "," + (d.outlier ? std::string("outlier") : std::to_string(d.class_index)) + "," +
           std::to_string(count[k]);
    for (std::size_t c = 0; c < k; ++c) out += "," + std::to_string(count[c]);
    out += "\n";
  }
  write_text(fs::path(cfg.out) / "classify_map.csv", out);
  write_text(fs::path(cfg.out) / "classify_map_thresholds.csv", thresholds);
  std::printf("classified %zu pixels with %zu model(s)\n", raster.rows(), dirs.size());
  return 0;
}

int cmd_som_export(const Flags& f) {
  const RunConfig cfg = resolve(f);
  parallel_for(cfg.trials, cfg.jobs, [&](std::size_t i) {
    const auto split = load_trial_split(cfg, i);
    const auto som = fit_som_pipeline(som_fit_rows(split, cfg.som.fit_set), cfg.som,
                                      derive_seed(trial_seed(cfg.seed, i), "som"));
    const fs::path dir = trial_dir(cfg, i) / "som";
    write_som_artifacts(cfg, som, split, dir);
    const Matrix feats = som.pipeline.features(split.test.spectra);
    std::string s = "label";
    for (std::size_t j = 0; j < feats.cols(); ++j) s += ",m" + std::to_string(j);
    s += "\n";
    for (std::size_t r = 0; r < feats.rows(); ++r) {
      s += split.test.truth[r].code();
      for (double v : feats.row(r)) s += "," + format_double(v);
      s += "\n";
    }
    write_text(dir / "test_memberships.csv", s);
  });
  std::printf("exported SOM artifacts for %zu trial(s)\n", cfg.trials);
  return 0;
}

int cmd_grad_check(const Flags& f) {
  const RunConfig cfg = resolve(f);
  bool ok = true;
  for (const auto& r : run_gradient_suite(cfg.seed)) {
    std::printf("%-36s max rel err %.3e (tol %.0e) %s\n", r.name.c_str(), r.max_error, r.tolerance,
                r.passed() ? "ok" : "FAIL");
    ok &= r.passed();
  }
  if (!ok) fail(ErrorKind::Numerical, "gradient check failed");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Outlier-aware semi-supervised GAN with SOM membership features"};
  app.require_subcommand(1);
  std::array<Flags, 6> flags;
  MapFlags map;

  auto* synth_cmd = app.add_subcommand("synth", "generate the synthetic scene and per-trial splits");
  auto* train_cmd = app.add_subcommand("train", "fit SOM stages and train the requested model types");
  auto* eval_cmd = app.add_subcommand("eval", "score checkpoints and summarise across trials");
  auto* map_cmd = app.add_subcommand("classify-map", "majority-vote decisions for a raster of spectra");
  auto* som_cmd = app.add_subcommand("som-export", "fit and export SOM, node statistics and memberships");
  auto* grad_cmd = app.add_subcommand("grad-check", "finite-difference gradient suite");
  const std::array<CLI::App*, 6> cmds{synth_cmd, train_cmd, eval_cmd, map_cmd, som_cmd, grad_cmd};
  for (std::size_t i = 0; i < cmds.size(); ++i) add_common(cmds[i], flags[i]);

  map_cmd->add_option("--raster", map.raster, "CSV of spectra, one pixel per row")->required()->check(CLI::ExistingFile);
  map_cmd->add_option("--model", map.models, "model directory (repeatable); default: every trial's checkpoint");
  map.tau_opt = map_cmd->add_option("--tau", map.tau, "fixed outlier threshold");
  map.q_opt = map_cmd->add_option("--reject-q", map.reject_q, "reject this fraction of calibration outliers");
  map_cmd->add_option("--calibration", map.calibration, "CSV of outlier spectra for --reject-q")
      ->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    return static_cast<int>(ErrorKind::Config);
  }

  try {
    if (*synth_cmd) return cmd_synth(flags[0]);
    if (*train_cmd) return cmd_train(flags[1]);
    if (*eval_cmd) return cmd_eval(flags[2]);
    if (*map_cmd) return cmd_classify_map(flags[3], map, !flags[3].model_types.empty());
    if (*som_cmd) return cmd_som_export(flags[4]);
    if (*grad_cmd) return cmd_grad_check(flags[5]);
  } catch (const Error& e) {
    std::fprintf(stderr, "error [%s]: %s\n", to_string(e.kind()), e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
