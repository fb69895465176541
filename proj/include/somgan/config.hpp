#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "somgan/membership.hpp"
#include "somgan/som.hpp"
#include "somgan/ssgan.hpp"
#include "somgan/synth.hpp"

namespace somgan {

enum class SomFitSet { Inliers, Labeled, All };
std::string_view som_fit_set_name(SomFitSet s) noexcept;
SomFitSet parse_som_fit_set(std::string_view name);

struct SomSettings {
  std::size_t rows = 10;
  std::size_t cols = 10;
  SomConfig train;
  SigmoidTrainConfig sigmoid;
  double angle_weight = kDefaultAngleWeight;
  BmuMetric target_metric = BmuMetric::DStar;
  SomFitSet fit_set = SomFitSet::Inliers;
};

struct SynthSettings {
  std::size_t bands = 32;
  std::size_t classes = 2;
  std::vector<std::string> families = synth::default_outlier_families();
  synth::SplitCounts counts;
  /// Optional scene JSON replacing the default scene.
  std::string scene_file;
};

struct EvalSettings {
  double confidence = 0.95;
  std::size_t grid_points = 101;
  double top_rate_max_false_alarm = 0.05;
  double rejection_q = 0.9;
};

struct RunConfig {
  static constexpr int kVersion = 1;

  std::uint64_t seed = 1;
  std::size_t trials = 20;
  std::size_t jobs = 1;
  std::string out = "somgan-out";
  std::vector<ModelType> model_types = all_model_types();
  SynthSettings synth;
  SomSettings som;
  TrainConfig ssgan;  // seed, mode and features are set per run
  EvalSettings eval;

  /// Throws Error(Config) on any invalid value.
  void validate() const;
  synth::Scene scene() const;
};

/// Throws Error(Config) for unknown keys, wrong types or an unsupported
/// version; Error(Parse) for malformed JSON.
RunConfig parse_run_config(const std::string& text, RunConfig base = {});
RunConfig load_run_config(const std::filesystem::path& path);
std::string run_config_to_json(const RunConfig& cfg);

}  // namespace somgan
