#pragma once

// Sigmoid membership units on top of SOM D* distances:
//   O_j(d) = 1 / (1 + exp(alpha_j * (d - beta_j)))
// fitted to neighbourhood targets (1 at the BMU, 0.5 on its 4-connected
// neighbours, 0.25 on the rest of its 3x3 block, 0 elsewhere) by full-batch
// gradient descent on E = sum_i 1/2 sum_j (t_ij - O_ij)^2, with a per-node
// step that is halved whenever it would raise that node's share of E.

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "somgan/matrix.hpp"
#include "somgan/som.hpp"

namespace somgan {

/// Saturates to exactly 0 or 1 only when the exponent leaves double range.
double membership(double d, double alpha, double beta) noexcept;

struct SigmoidLayer {
  std::vector<double> alpha;
  std::vector<double> beta;

  std::size_t size() const noexcept { return alpha.size(); }
  std::vector<double> apply(std::span<const double> distances) const;
  Matrix apply(const Matrix& distances) const;

  friend bool operator==(const SigmoidLayer&, const SigmoidLayer&) = default;
};

inline constexpr double kTargetBmu = 1.0;
inline constexpr double kTargetDirect = 0.5;
inline constexpr double kTargetBlock = 0.25;

/// Target row for a sample whose BMU is `bmu_node`.
std::vector<double> target_vector(const SomGrid& grid, std::size_t bmu_node);

/// One target row per sample (rows of `samples`), BMU chosen under `metric`.
Matrix make_targets(const SomGrid& grid, const NodeStats& stats, const Matrix& samples,
                    BmuMetric metric = BmuMetric::DStar,
                    double angle_weight = kDefaultAngleWeight);
/// Same, from precomputed D* rows (BMU = argmin, lowest index on ties).
Matrix make_targets_from_distances(const SomGrid& grid, const Matrix& distances);

/// beta_j = mean D* of the samples whose D*-BMU is j (global mean when the
/// node has none), alpha_j = 4 / beta_j.
SigmoidLayer init_sigmoids(const Matrix& distances);

double sigmoid_objective(const SigmoidLayer& layer, const Matrix& distances, const Matrix& targets);

struct SigmoidGradient {
  std::vector<double> alpha;
  std::vector<double> beta;
};
SigmoidGradient sigmoid_gradient(const SigmoidLayer& layer, const Matrix& distances,
                                 const Matrix& targets);

struct SigmoidTrainConfig {
  double lr = 0.05;
  int epochs = 500;
  double alpha_floor = 1e-4;
};

struct SigmoidTrainResult {
  SigmoidLayer layer;
  /// E before any update followed by E after each epoch.
  std::vector<double> loss_trace;
};

/// Throws Error(Divergence) naming the epoch on a non-finite objective.
SigmoidTrainResult train_sigmoids(SigmoidLayer layer, const Matrix& distances,
                                  const Matrix& targets, const SigmoidTrainConfig& cfg = {});

/// Everything needed to turn a raw spectrum into SOM membership features.
struct SomPipeline {
  SomGrid grid;
  NodeStats stats;
  SigmoidLayer sigmoids;
  double angle_weight = kDefaultAngleWeight;

  std::size_t feature_count() const noexcept { return grid.node_count(); }
  std::vector<double> features(std::span<const double> raw_spectrum) const;
  Matrix features(const Matrix& raw_spectra) const;
};

inline std::vector<double> som_feature_vector(const SomPipeline& p, std::span<const double> x) {
  return p.features(x);
}

/// Rows `j,alpha,beta`.
void save_sigmoids_csv(const SigmoidLayer& layer, const std::filesystem::path& path);
SigmoidLayer load_sigmoids_csv(const std::filesystem::path& path);

}  // namespace somgan
