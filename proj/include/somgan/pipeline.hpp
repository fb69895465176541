#pragma once

// End-to-end experiment: per trial draw a split, fit the SOM pipeline once,
// train the requested model types, score the test set, then average over
// trials.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "somgan/config.hpp"
#include "somgan/eval.hpp"
#include "somgan/membership.hpp"
#include "somgan/ssgan.hpp"
#include "somgan/synth.hpp"

namespace somgan {

std::uint64_t trial_seed(std::uint64_t master_seed, std::size_t trial_index) noexcept;

struct SomFitResult {
  SomPipeline pipeline;
  std::vector<double> sigmoid_loss;
};

/// SOM -> node statistics -> sigmoid memberships, all on `fit_rows`.
SomFitResult fit_som_pipeline(const Matrix& fit_rows, const SomSettings& settings, std::uint64_t seed);

/// Rows of the split used to fit the SOM stages under `fit_set`.
Matrix som_fit_rows(const synth::ExperimentSplit& split, SomFitSet fit_set);

TrainingSet training_set(const synth::ExperimentSplit& split);
TrainConfig train_config_for(const RunConfig& cfg, ModelType type, std::uint64_t seed);

struct ModelEvaluation {
  std::vector<double> inlier_scores;
  std::vector<double> outlier_scores;
  std::vector<std::size_t> predicted;  // test inliers only
  std::vector<std::size_t> truth;
  eval::RocCurve roc;
  eval::ReliabilityCurve reliability;
  double top_rate = 0.0;
};

ModelEvaluation evaluate_model(const SsganModel& model, const synth::Partition& test, double top_rate_max_fa);

struct TrialArtifacts {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  synth::ExperimentSplit split;
  std::optional<SomFitResult> som;
  std::map<ModelType, TrainResult> models;
  std::map<ModelType, ModelEvaluation> evaluations;
};

/// Fits the SOM stages (when any configured type needs them) and trains
/// every configured model type on `split`; no evaluation.
TrialArtifacts train_trial(const RunConfig& cfg, synth::ExperimentSplit split, std::size_t index);
/// Draws the trial's split, trains and evaluates every configured model type.
TrialArtifacts run_trial(const RunConfig& cfg, const synth::Scene& scene, std::size_t index);

struct ExperimentResult {
  std::vector<std::map<ModelType, ModelEvaluation>> trials;
  std::map<ModelType, eval::TrialSummary> summaries;
};

/// Runs trials on a pool of cfg.jobs workers; results are ordered by trial
/// so the outcome is independent of scheduling. `on_trial` runs on the
/// worker thread and must be thread-safe.
ExperimentResult run_experiment(const RunConfig& cfg,
                                const std::function<void(const TrialArtifacts&)>& on_trial = {});

/// Runs fn(i) for i in [0, n) on `jobs` threads. The first exception thrown
/// is rethrown after all workers stop.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn);

std::map<ModelType, eval::TrialSummary> summarize(const RunConfig& cfg,
                                                  const std::vector<std::map<ModelType, ModelEvaluation>>& trials);

/// Per model type: AUC and top classification rate means with raw and
/// [0,1]-clamped 95% intervals.
std::string summary_json(const RunConfig& cfg, const std::map<ModelType, eval::TrialSummary>& summaries);
/// Fixed-width comparison table across model types.
std::string summary_table(const std::map<ModelType, eval::TrialSummary>& summaries);

}  // namespace somgan
