#include "somgan/pipeline.hpp"

#include <atomic>
#include <cstdio>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "somgan/error.hpp"
#include "somgan/som.hpp"

namespace somgan {

std::uint64_t trial_seed(std::uint64_t master_seed, std::size_t trial_index) noexcept {
  return derive_seed(derive_seed(master_seed, "trial"), static_cast<std::uint64_t>(trial_index));
}

SomFitResult fit_som_pipeline(const Matrix& fit_rows, const SomSettings& s, std::uint64_t seed) {
  if (fit_rows.rows() < 2) fail(ErrorKind::Precondition, "SOM fitting needs at least 2 spectra");
  SomConfig cfg = s.train;
  cfg.seed = seed;
  SomFitResult out;
  out.pipeline.grid = train_som(fit_rows, cfg, s.rows, s.cols);
  out.pipeline.stats = estimate_node_stats(out.pipeline.grid, fit_rows, default_ridge(fit_rows, cfg.ridge_scale));
  out.pipeline.angle_weight = s.angle_weight;
  const Matrix d = dstar_features(out.pipeline.grid, out.pipeline.stats, fit_rows, s.angle_weight);
  const Matrix targets = s.target_metric == BmuMetric::DStar
                             ? make_targets_from_distances(out.pipeline.grid, d)
                             : make_targets(out.pipeline.grid, out.pipeline.stats, fit_rows, BmuMetric::Euclidean,
                                            s.angle_weight);
  auto trained = train_sigmoids(init_sigmoids(d), d, targets, s.sigmoid);
  out.pipeline.sigmoids = std::move(trained.layer);
  out.sigmoid_loss = std::move(trained.loss_trace);
  return out;
}

Matrix som_fit_rows(const synth::ExperimentSplit& split, SomFitSet fit_set) {
  std::vector<std::size_t> labeled;
  std::vector<std::size_t> unlabeled;
  for (std::size_t i = 0; i < split.labeled.size(); ++i)
    if (fit_set == SomFitSet::All || split.labeled.truth[i].is_inlier()) labeled.push_back(i);
  if (fit_set != SomFitSet::Labeled)
    for (std::size_t i = 0; i < split.unlabeled.size(); ++i)
      if (fit_set == SomFitSet::All || split.unlabeled.truth[i].is_inlier()) unlabeled.push_back(i);
  Matrix rows = split.labeled.spectra.gather_rows(labeled);
  if (!unlabeled.empty()) rows = vconcat(rows, split.unlabeled.spectra.gather_rows(unlabeled));
  return rows;
}

TrainingSet training_set(const synth::ExperimentSplit& split) {
  TrainingSet t;
  t.labeled = split.labeled.spectra;
  t.labels = split.labeled.labels;
  t.unlabeled = split.unlabeled.spectra;
  t.class_count = split.classes;
  return t;
}

TrainConfig train_config_for(const RunConfig& cfg, ModelType type, std::uint64_t seed) {
  TrainConfig t = cfg.ssgan;
  t.mode = training_mode(type);
  t.features = feature_set(type);
  t.seed = derive_seed(seed, model_type_name(type));
  return t;
}

ModelEvaluation evaluate_model(const SsganModel& model, const synth::Partition& test, double top_rate_max_fa) {
  const Matrix logits = model.logits(test.spectra);
  const auto scores = outlier_scores(logits);
  const auto classes = inlier_classes(logits);
  ModelEvaluation e;
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (test.truth[i].is_inlier()) {
      e.inlier_scores.push_back(scores[i]);
      e.predicted.push_back(classes[i]);
      e.truth.push_back(static_cast<std::size_t>(test.truth[i].class_index()));
    } else if (test.truth[i].is_outlier()) {
      e.outlier_scores.push_back(scores[i]);
    }
  }
  e.roc = eval::roc(e.inlier_scores, e.outlier_scores);
  e.reliability = eval::reliability_curve(e.roc, e.inlier_scores, e.predicted, e.truth);
  e.top_rate = eval::top_classification_rate(e.reliability, top_rate_max_fa);
  return e;
}

TrialArtifacts train_trial(const RunConfig& cfg, synth::ExperimentSplit split, std::size_t index) {
  TrialArtifacts t;
  t.index = index;
  t.seed = trial_seed(cfg.seed, index);
  t.split = std::move(split);
  bool needs_som = false;
  for (auto type : cfg.model_types) needs_som |= feature_set(type) == FeatureSet::SpectraSom;
  if (needs_som) t.som = fit_som_pipeline(som_fit_rows(t.split, cfg.som.fit_set), cfg.som, derive_seed(t.seed, "som"));
  const TrainingSet data = training_set(t.split);
  for (auto type : cfg.model_types) {
    std::optional<SomPipeline> som;
    if (feature_set(type) == FeatureSet::SpectraSom) som = t.som->pipeline;
    try {
      t.models.emplace(type, train(data, som, train_config_for(cfg, type, t.seed)));
    } catch (const Error& e) {
      throw Error(e.kind(), "trial " + std::to_string(index) + ", " + std::string(model_type_name(type)) + ": " + e.what());
    }
  }
  return t;
}

TrialArtifacts run_trial(const RunConfig& cfg, const synth::Scene& scene, std::size_t index) {
  TrialArtifacts t = train_trial(cfg, synth::make_split(scene, cfg.synth.counts, trial_seed(cfg.seed, index)), index);
  for (const auto& [type, result] : t.models)
    t.evaluations[type] = evaluate_model(result.model, t.split.test, cfg.eval.top_rate_max_false_alarm);
  return t;
}

void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::exception_ptr first;
  std::mutex mu;
  std::vector<std::thread> workers;
  for (std::size_t w = 0; w < jobs; ++w)
    workers.emplace_back([&] {
      for (;;) {
        if (stop) return;
        const std::size_t i = next++;
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!first) first = std::current_exception();
          stop = true;
        }
      }
    });
  for (auto& w : workers) w.join();
  if (first) std::rethrow_exception(first);
}

std::map<ModelType, eval::TrialSummary> summarize(const RunConfig& cfg,
                                                  const std::vector<std::map<ModelType, ModelEvaluation>>& trials) {
  const auto grid = eval::default_grid(cfg.eval.grid_points);
  std::map<ModelType, eval::TrialSummary> out;
  for (auto type : cfg.model_types) {
    std::vector<eval::TrialCurves> curves;
    for (const auto& t : trials) {
      const auto it = t.find(type);
      if (it != t.end()) curves.push_back({it->second.roc, it->second.reliability});
    }
    out[type] = eval::summarize_trials(curves, grid, cfg.eval.confidence, cfg.eval.top_rate_max_false_alarm);
  }
  return out;
}

ExperimentResult run_experiment(const RunConfig& cfg, const std::function<void(const TrialArtifacts&)>& on_trial) {
  cfg.validate();
  if (cfg.trials < 2) fail(ErrorKind::Precondition, "an experiment needs at least 2 trials for confidence intervals");
  const synth::Scene scene = cfg.scene();
  ExperimentResult result;
  result.trials.resize(cfg.trials);
  parallel_for(cfg.trials, cfg.jobs, [&](std::size_t i) {
    TrialArtifacts t = run_trial(cfg, scene, i);
    if (on_trial) on_trial(t);
    result.trials[i] = std::move(t.evaluations);
  });
  result.summaries = summarize(cfg, result.trials);
  return result;
}

std::string summary_json(const RunConfig& cfg, const std::map<ModelType, eval::TrialSummary>& summaries) {
  using nlohmann::json;
  auto ci = [](const eval::MeanCi& m) {
    return json{{"mean", m.mean},
                {"ci", {eval::clamp_unit(m.lo), eval::clamp_unit(m.hi)}},
                {"ci_raw", {m.lo, m.hi}},
                {"half_width", m.half_width}};
  };
  json j;
  j["seed"] = cfg.seed;
  j["confidence"] = cfg.eval.confidence;
  j["top_rate_max_false_alarm"] = cfg.eval.top_rate_max_false_alarm;
  j["models"] = json::array();
  for (auto type : cfg.model_types) {
    const auto it = summaries.find(type);
    if (it == summaries.end()) continue;
    const auto& s = it->second;
    j["models"].push_back({{"model_type", std::string(model_type_name(type))},
                           {"trials", s.trials},
                           {"auc", ci(s.auc)},
                           {"top_classification_rate", ci(s.top_rate)},
                           {"auc_per_trial", s.auc_values},
                           {"top_rate_per_trial", s.top_rate_values}});
  }
  return j.dump(2) + "\n";
}

std::string summary_table(const std::map<ModelType, eval::TrialSummary>& summaries) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-18s %-26s %-26s\n", "model", "mean ROC AUC [95% CI]", "top class. rate [95% CI]");
  os << line;
  for (const auto& [type, s] : summaries) {
    std::snprintf(line, sizeof line, "%-18s %.3f [%.3f, %.3f]       %.3f [%.3f, %.3f]\n",
                  std::string(model_type_name(type)).c_str(), s.auc.mean, eval::clamp_unit(s.auc.lo),
                  eval::clamp_unit(s.auc.hi), s.top_rate.mean, eval::clamp_unit(s.top_rate.lo),
                  eval::clamp_unit(s.top_rate.hi));
    os << line;
  }
  return os.str();
}

}  // namespace somgan
