#pragma once

// Kohonen self-organizing map on raw reflectance, per-node covariance
// statistics, and the hybrid node distance
//   D*(x, j) = mahalanobis(x, w_j; S_j + ridge I) + angle_weight * spectral_angle(x, w_j)
// with angle_weight = 40 by default.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "somgan/matrix.hpp"

namespace somgan {

inline constexpr double kDefaultAngleWeight = 40.0;

struct SomConfig {
  int epochs = 40;
  double lr_initial = 0.5;
  double lr_final = 0.01;
  /// Non-positive means max(rows, cols) / 2.
  double sigma_initial = 0.0;
  double sigma_final = 0.5;
  /// Ridge as a multiple of the mean band variance of the fitting data.
  double ridge_scale = 1e-3;
  std::uint64_t seed = 0;

  /// Throws Error(Config) on violated schedule constraints.
  void validate() const;
};

class SomGrid {
 public:
  SomGrid() = default;
  SomGrid(std::size_t rows, std::size_t cols, Matrix weights);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t node_count() const noexcept { return rows_ * cols_; }
  std::size_t band_count() const noexcept { return weights_.cols(); }

  std::size_t index(std::size_t r, std::size_t c) const noexcept { return r * cols_ + c; }
  std::size_t row_of(std::size_t j) const noexcept { return j / cols_; }
  std::size_t col_of(std::size_t j) const noexcept { return j % cols_; }
  /// Squared Euclidean distance between two nodes on the lattice.
  double grid_distance2(std::size_t a, std::size_t b) const noexcept;

  const Matrix& weights() const noexcept { return weights_; }
  Matrix& weights() noexcept { return weights_; }
  std::span<const double> weight(std::size_t j) const noexcept { return weights_.row(j); }

  friend bool operator==(const SomGrid&, const SomGrid&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Matrix weights_;
};

/// Online Kohonen training with Gaussian lattice neighbourhood and
/// per-epoch exponential decay of learning rate and radius. Weights start
/// as randomly chosen training samples.
SomGrid train_som(const Matrix& data, const SomConfig& cfg, std::size_t rows, std::size_t cols);

/// Lowest flat index wins ties.
std::size_t bmu_euclidean(const SomGrid& grid, std::span<const double> x);

/// 1e-3-style ridge: scale * mean over bands of the population variance.
double default_ridge(const Matrix& data, double scale);

struct NodeStats {
  double ridge = 0.0;
  std::vector<Matrix> covariance;  // S_j, B x B
  std::vector<Matrix> cholesky;    // lower factor of S_j + ridge I
  std::vector<Matrix> whitening;   // (L^-1)^T, so diff * whitening has unit covariance
  std::vector<std::size_t> counts;

  std::size_t node_count() const noexcept { return counts.size(); }
};

NodeStats estimate_node_stats(const SomGrid& grid, const Matrix& data, double ridge);

/// Rebuilds the factors from stored covariances (used after loading).
NodeStats node_stats_from_covariances(std::vector<Matrix> covariance,
                                      std::vector<std::size_t> counts, double ridge);

/// Lower Cholesky factor of an SPD matrix. Throws Error(Numerical) when a
/// pivot is not positive.
Matrix cholesky(const Matrix& spd);
/// Inverse of a lower-triangular matrix with a positive diagonal.
Matrix invert_lower(const Matrix& lower);

double mahalanobis(std::span<const double> x, const SomGrid& grid, const NodeStats& stats,
                   std::size_t node);
/// Mahalanobis distance given x - y and the lower Cholesky factor of S.
double mahalanobis_from_factor(std::span<const double> diff, const Matrix& lower);

/// Radians in [0, pi]. Throws Error(Precondition) on a zero-norm input.
double spectral_angle(std::span<const double> x, std::span<const double> y);

double dstar(std::span<const double> x, const SomGrid& grid, const NodeStats& stats,
             std::size_t node, double angle_weight = kDefaultAngleWeight);

/// D* against every node in flat-index order.
std::vector<double> dstar_features(const SomGrid& grid, const NodeStats& stats,
                                   std::span<const double> x,
                                   double angle_weight = kDefaultAngleWeight);
Matrix dstar_features(const SomGrid& grid, const NodeStats& stats, const Matrix& xs,
                      double angle_weight = kDefaultAngleWeight);

enum class BmuMetric { Euclidean, DStar };
BmuMetric parse_bmu_metric(std::string_view name);

/// Lowest flat index wins ties.
std::size_t bmu(const SomGrid& grid, const NodeStats& stats, std::span<const double> x,
                BmuMetric metric, double angle_weight = kDefaultAngleWeight);

/// counts[class][node]: how often each node is the BMU for that class.
std::vector<std::vector<std::size_t>> bmu_histogram(const SomGrid& grid, const NodeStats& stats,
                                                    const std::vector<Matrix>& per_class,
                                                    BmuMetric metric,
                                                    double angle_weight = kDefaultAngleWeight);

/// Rows `r,c,b0..b{B-1}` under a header.
void save_som_weights_csv(const SomGrid& grid, const std::filesystem::path& path);
SomGrid load_som_weights_csv(const std::filesystem::path& path);

/// Rows `node,r,c,<class names...>`.
void save_histogram_csv(const SomGrid& grid, const std::vector<std::vector<std::size_t>>& counts,
                        const std::vector<std::string>& class_names,
                        const std::filesystem::path& path);

}  // namespace somgan
