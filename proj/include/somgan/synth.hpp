#pragma once

// Synthetic spectral scenes: materials as smooth bump curves under random
// illumination and additive noise, plus the labeled / unlabeled / test
// sampling protocol for one trial.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "somgan/core.hpp"
#include "somgan/matrix.hpp"
#include "somgan/rng.hpp"

namespace somgan::synth {

/// amplitude * exp(-(t - center)^2 / (2 width^2)) on t in [0, 1].
struct Bump {
  double center = 0.5;
  double width = 0.1;
  double amplitude = 1.0;
};

struct MaterialModel {
  std::string name;
  std::vector<Bump> bumps;
  double offset = 0.0;  // flat floor added to the bumps
  double illum_lo = 1.0;
  double illum_hi = 1.0;
  double noise_std = 0.0;
  bool inlier = true;
  int class_index = -1;  // inliers only

  /// Throws Error(Config) for a negative base, illum_lo <= 0 or illum_hi < illum_lo.
  void validate(std::size_t bands) const;
};

/// Length-`bands` base curve.
Spectrum base_curve(const MaterialModel& m, std::size_t bands);

/// n spectra u * base + noise clipped at zero, u ~ U[illum_lo, illum_hi].
Matrix sample_material(const MaterialModel& m, std::size_t bands, std::size_t n, RandomStream& rng);

struct Scene {
  std::size_t bands = 32;
  std::size_t classes = 2;
  std::vector<MaterialModel> materials;  // inliers first, ordered by class
  std::string labeled_outlier_family = "panel";

  std::vector<const MaterialModel*> inliers() const;
  std::vector<const MaterialModel*> outliers() const;
  const MaterialModel& material(const std::string& name) const;
  void validate() const;
};

inline const std::vector<std::string>& default_outlier_families() {
  static const std::vector<std::string> families{"dark", "panel", "soil", "roof"};
  return families;
}

/// K inlier materials with partially overlapping bumps plus the requested
/// outlier families out of dark, panel, soil, roof. Throws Error(Config)
/// for K < 2 or an unknown family.
Scene default_scene(std::size_t bands = 32, std::size_t classes = 2,
                    const std::vector<std::string>& families = default_outlier_families());

std::string scene_to_json(const Scene& scene);
Scene scene_from_json(const std::string& text);

struct SplitCounts {
  std::size_t labeled_per_class = 10;
  std::size_t labeled_outliers = 10;
  std::size_t unlabeled_per_class = 500;
  std::size_t unlabeled_outliers = 3500;
  std::size_t test_per_class = 500;
  std::size_t test_outliers_per_family = 250;

  void validate() const;
};

/// Rows of one partition with labels as seen by training (`labels`) and the
/// ground truth (`truth`).
struct Partition {
  Matrix spectra;
  std::vector<Label> labels;
  std::vector<Label> truth;
  std::vector<std::string> material;
  std::vector<std::uint64_t> ids;

  std::size_t size() const noexcept { return spectra.rows(); }
  Dataset to_dataset(std::size_t classes, bool ground_truth) const;
};

struct ExperimentSplit {
  std::uint64_t trial_seed = 0;
  std::size_t classes = 2;
  Partition labeled;    // inliers then labeled outliers
  Partition unlabeled;  // labels are all `unlabeled`
  Partition test;       // labels equal truth
};

/// Unlabeled outliers are spread as evenly as possible over every outlier
/// family; labeled outliers come only from the scene's labeled family.
ExperimentSplit make_split(const Scene& scene, const SplitCounts& counts, std::uint64_t trial_seed);

/// Fresh draws of one material, independent of any split stream.
Matrix draw_material(const Scene& scene, const std::string& name, std::size_t n, std::uint64_t seed);

/// labeled.csv, unlabeled.csv, unlabeled_truth.csv, test.csv in `dir`.
void save_split(const ExperimentSplit& split, const std::filesystem::path& dir);
ExperimentSplit load_split(const std::filesystem::path& dir, std::size_t classes);

}  // namespace somgan::synth
