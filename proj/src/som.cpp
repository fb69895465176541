#include "somgan/som.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>

#include "somgan/core.hpp"
#include "somgan/error.hpp"
#include "somgan/rng.hpp"
#include "somgan/simd.hpp"

namespace somgan {

void SomConfig::validate() const {
  if (epochs < 1) fail(ErrorKind::Config, "som.epochs must be >= 1");
  if (!(lr_final > 0.0) || lr_initial < lr_final)
    fail(ErrorKind::Config, "som learning rates need lr_initial >= lr_final > 0");
  if (!(sigma_final > 0.0) || (sigma_initial > 0.0 && sigma_initial < sigma_final))
    fail(ErrorKind::Config, "som radii need sigma_initial >= sigma_final > 0");
  if (!(ridge_scale > 0.0)) fail(ErrorKind::Config, "som.ridge_scale must be positive");
}

SomGrid::SomGrid(std::size_t rows, std::size_t cols, Matrix weights)
    : rows_(rows), cols_(cols), weights_(std::move(weights)) {
  if (rows == 0 || cols == 0) fail(ErrorKind::Precondition, "SOM grid must be at least 1x1");
  require_dims(weights_.rows() == rows * cols, "SOM weights must have rows*cols node vectors");
  for (double v : weights_.values())
    if (!std::isfinite(v)) fail(ErrorKind::Numerical, "non-finite SOM weight");
}

double SomGrid::grid_distance2(std::size_t a, std::size_t b) const noexcept {
  const double dr = static_cast<double>(row_of(a)) - static_cast<double>(row_of(b));
  const double dc = static_cast<double>(col_of(a)) - static_cast<double>(col_of(b));
  return dr * dr + dc * dc;
}

std::size_t bmu_euclidean(const SomGrid& grid, std::span<const double> x) {
  require_dims(x.size() == grid.band_count(), "bmu: band count mismatch");
  std::size_t best = 0;
  double best_d = simd::squared_distance(x, grid.weight(0));
  for (std::size_t j = 1; j < grid.node_count(); ++j) {
    const double d = simd::squared_distance(x, grid.weight(j));
    if (d < best_d) {
      best_d = d;
      best = j;
    }
  }
  return best;
}

namespace {
double decay(double initial, double final_value, int epoch, int epochs) {
  if (epochs <= 1) return initial;
  const double t = static_cast<double>(epoch) / static_cast<double>(epochs - 1);
  return initial * std::pow(final_value / initial, t);
}
}  // namespace

SomGrid train_som(const Matrix& data, const SomConfig& cfg, std::size_t rows, std::size_t cols) {
  cfg.validate();
  if (data.rows() == 0) fail(ErrorKind::Precondition, "train_som: no training spectra");
  if (rows == 0 || cols == 0) fail(ErrorKind::Precondition, "SOM grid must be at least 1x1");

  RandomStream rng(cfg.seed);
  const std::size_t nodes = rows * cols;
  Matrix weights(nodes, data.cols());
  for (std::size_t j = 0; j < nodes; ++j) {
    const auto src = data.row(rng.index(data.rows()));
    std::copy(src.begin(), src.end(), weights.row(j).begin());
  }
  SomGrid grid(rows, cols, std::move(weights));

  const double sigma0 =
      cfg.sigma_initial > 0.0 ? cfg.sigma_initial
                              : std::max(static_cast<double>(std::max(rows, cols)) / 2.0, cfg.sigma_final);
  std::vector<std::size_t> order(data.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> diff(data.cols());

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = decay(cfg.lr_initial, cfg.lr_final, epoch, cfg.epochs);
    const double sigma = decay(sigma0, cfg.sigma_final, epoch, cfg.epochs);
    const double inv_two_sigma2 = 1.0 / (2.0 * sigma * sigma);
    std::shuffle(order.begin(), order.end(), rng.engine());
    for (std::size_t idx : order) {
      const auto x = data.row(idx);
      const std::size_t winner = bmu_euclidean(grid, x);
      for (std::size_t j = 0; j < nodes; ++j) {
        const double h = std::exp(-grid.grid_distance2(j, winner) * inv_two_sigma2);
        const double step = lr * h;
        if (step == 0.0) continue;
        auto w = grid.weights().row(j);
        for (std::size_t b = 0; b < diff.size(); ++b) diff[b] = x[b] - w[b];
        simd::axpy(step, diff, w);
      }
    }
  }
  return grid;
}

double default_ridge(const Matrix& data, double scale) {
  if (data.rows() == 0) fail(ErrorKind::Precondition, "default_ridge: no data");
  const auto z = Standardizer::fit(data);
  double mean_var = 0.0;
  for (double s : z.stddev()) mean_var += s * s;
  mean_var /= static_cast<double>(z.band_count());
  return scale * std::max(mean_var, 1e-12);
}

Matrix cholesky(const Matrix& spd) {
  require_dims(spd.rows() == spd.cols(), "cholesky: matrix must be square");
  const std::size_t n = spd.rows();
  Matrix lower(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      const double partial =
          simd::dot(lower.row(i).subspan(0, j), lower.row(j).subspan(0, j));
      const double v = spd(i, j) - partial;
      if (i == j) {
        if (!(v > 0.0)) fail(ErrorKind::Numerical, "cholesky: matrix is not positive definite");
        lower(i, i) = std::sqrt(v);
      } else {
        lower(i, j) = v / lower(j, j);
      }
    }
  }
  return lower;
}

Matrix invert_lower(const Matrix& lower) {
  require_dims(lower.rows() == lower.cols(), "invert_lower: matrix must be square");
  const std::size_t n = lower.rows();
  Matrix inv(n, n);
  for (std::size_t c = 0; c < n; ++c) {
    inv(c, c) = 1.0 / lower(c, c);
    for (std::size_t i = c + 1; i < n; ++i) {
      double partial = 0.0;
      for (std::size_t k = c; k < i; ++k) partial += lower(i, k) * inv(k, c);
      inv(i, c) = -partial / lower(i, i);
    }
  }
  return inv;
}

namespace {
Matrix ridged(const Matrix& cov, double ridge) {
  Matrix m = cov;
  for (std::size_t b = 0; b < m.rows(); ++b) m(b, b) += ridge;
  return m;
}
}  // namespace

NodeStats node_stats_from_covariances(std::vector<Matrix> covariance,
                                      std::vector<std::size_t> counts, double ridge) {
  if (!(ridge > 0.0)) fail(ErrorKind::Precondition, "node statistics need a positive ridge");
  require_dims(covariance.size() == counts.size(), "node stats: count/covariance mismatch");
  NodeStats stats;
  stats.ridge = ridge;
  stats.counts = std::move(counts);
  stats.covariance = std::move(covariance);
  stats.cholesky.reserve(stats.covariance.size());
  stats.whitening.reserve(stats.covariance.size());
  for (const auto& s : stats.covariance) {
    stats.cholesky.push_back(cholesky(ridged(s, ridge)));
    stats.whitening.push_back(invert_lower(stats.cholesky.back()).transposed());
  }
  return stats;
}

NodeStats estimate_node_stats(const SomGrid& grid, const Matrix& data, double ridge) {
  require_dims(data.cols() == grid.band_count(), "node stats: band count mismatch");
  const std::size_t nodes = grid.node_count();
  const std::size_t bands = grid.band_count();
  std::vector<std::vector<std::size_t>> members(nodes);
  for (std::size_t i = 0; i < data.rows(); ++i) members[bmu_euclidean(grid, data.row(i))].push_back(i);

  std::vector<Matrix> cov(nodes, Matrix(bands, bands));
  std::vector<std::size_t> counts(nodes);
  for (std::size_t j = 0; j < nodes; ++j) {
    counts[j] = members[j].size();
    if (counts[j] <= 1) continue;
    const Matrix xs = data.gather_rows(members[j]);
    const auto z = Standardizer::fit(xs);
    Matrix centered(xs.rows(), bands);
    for (std::size_t i = 0; i < xs.rows(); ++i)
      for (std::size_t b = 0; b < bands; ++b) centered(i, b) = xs(i, b) - z.mean()[b];
    Matrix s = matmul_tn(centered, centered);
    const double inv_n = 1.0 / static_cast<double>(xs.rows());
    for (std::size_t a = 0; a < bands; ++a)
      for (std::size_t b = 0; b <= a; ++b) {
        const double v = 0.5 * (s(a, b) + s(b, a)) * inv_n;
        s(a, b) = v;
        s(b, a) = v;
      }
    cov[j] = std::move(s);
  }
  return node_stats_from_covariances(std::move(cov), std::move(counts), ridge);
}

double mahalanobis_from_factor(std::span<const double> diff, const Matrix& lower) {
  require_dims(diff.size() == lower.rows(), "mahalanobis: band count mismatch");
  const std::size_t n = diff.size();
  std::vector<double> y(n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double partial = simd::dot(lower.row(i).subspan(0, i), std::span<const double>(y).subspan(0, i));
    y[i] = (diff[i] - partial) / lower(i, i);
    sum += y[i] * y[i];
  }
  return std::sqrt(sum);
}

double mahalanobis(std::span<const double> x, const SomGrid& grid, const NodeStats& stats,
                   std::size_t node) {
  require_dims(x.size() == grid.band_count(), "mahalanobis: band count mismatch");
  require_dims(node < stats.node_count(), "mahalanobis: node index outside statistics");
  const auto w = grid.weight(node);
  Matrix diff(1, x.size());
  for (std::size_t b = 0; b < x.size(); ++b) diff(0, b) = x[b] - w[b];
  const Matrix y = matmul(diff, stats.whitening[node]);
  return std::sqrt(simd::dot(y.row(0), y.row(0)));
}

namespace {
// 2 atan2(|u - v|, |u + v|) on the unit vectors; unlike acos of the cosine
// it keeps full precision for nearly parallel spectra.
double angle_from_parts(std::span<const double> x, std::span<const double> y, double xx, double yy) {
  if (!(xx > 0.0) || !(yy > 0.0))
    fail(ErrorKind::Precondition, "spectral angle undefined for a zero-norm spectrum");
  const double ix = 1.0 / std::sqrt(xx), iy = 1.0 / std::sqrt(yy);
  double minus = 0.0, plus = 0.0;
  for (std::size_t b = 0; b < x.size(); ++b) {
    const double u = x[b] * ix, v = y[b] * iy;
    minus += (u - v) * (u - v);
    plus += (u + v) * (u + v);
  }
  return 2.0 * std::atan2(std::sqrt(minus), std::sqrt(plus));
}
}  // namespace

double spectral_angle(std::span<const double> x, std::span<const double> y) {
  require_dims(x.size() == y.size(), "spectral_angle: band count mismatch");
  return angle_from_parts(x, y, simd::dot(x, x), simd::dot(y, y));
}

double dstar(std::span<const double> x, const SomGrid& grid, const NodeStats& stats,
             std::size_t node, double angle_weight) {
  return mahalanobis(x, grid, stats, node) + angle_weight * spectral_angle(x, grid.weight(node));
}

std::vector<double> dstar_features(const SomGrid& grid, const NodeStats& stats,
                                   std::span<const double> x, double angle_weight) {
  Matrix xs(1, x.size());
  std::copy(x.begin(), x.end(), xs.row(0).begin());
  const Matrix d = dstar_features(grid, stats, xs, angle_weight);
  return std::vector<double>(d.values().begin(), d.values().end());
}

// Every row is computed with the same kernel calls whatever the batch size,
// so single-spectrum and batched features agree bit-for-bit.
Matrix dstar_features(const SomGrid& grid, const NodeStats& stats, const Matrix& xs,
                      double angle_weight) {
  require_dims(xs.cols() == grid.band_count(), "dstar_features: band count mismatch");
  require_dims(stats.node_count() == grid.node_count() && stats.whitening.size() == grid.node_count(),
               "dstar_features: stats/grid mismatch");
  const std::size_t n = xs.rows();
  const std::size_t bands = xs.cols();
  Matrix out(n, grid.node_count());
  std::vector<double> xx(n);
  for (std::size_t i = 0; i < n; ++i) xx[i] = simd::dot(xs.row(i), xs.row(i));
  Matrix diff(n, bands);
  for (std::size_t j = 0; j < grid.node_count(); ++j) {
    const auto w = grid.weight(j);
    const double ww = simd::dot(w, w);
    for (std::size_t i = 0; i < n; ++i) {
      const auto x = xs.row(i);
      auto d = diff.row(i);
      for (std::size_t b = 0; b < bands; ++b) d[b] = x[b] - w[b];
    }
    const Matrix y = matmul(diff, stats.whitening[j]);
    for (std::size_t i = 0; i < n; ++i) {
      const double m = std::sqrt(simd::dot(y.row(i), y.row(i)));
      out(i, j) = m + angle_weight * angle_from_parts(xs.row(i), w, xx[i], ww);
    }
  }
  return out;
}

BmuMetric parse_bmu_metric(std::string_view name) {
  if (name == "euclidean") return BmuMetric::Euclidean;
  if (name == "dstar") return BmuMetric::DStar;
  fail(ErrorKind::Config, "unknown BMU metric '" + std::string(name) + "' (euclidean|dstar)");
}

std::size_t bmu(const SomGrid& grid, const NodeStats& stats, std::span<const double> x,
                BmuMetric metric, double angle_weight) {
  if (metric == BmuMetric::Euclidean) return bmu_euclidean(grid, x);
  const auto d = dstar_features(grid, stats, x, angle_weight);
  return static_cast<std::size_t>(std::min_element(d.begin(), d.end()) - d.begin());
}

std::vector<std::vector<std::size_t>> bmu_histogram(const SomGrid& grid, const NodeStats& stats,
                                                    const std::vector<Matrix>& per_class,
                                                    BmuMetric metric, double angle_weight) {
  std::vector<std::vector<std::size_t>> counts;
  counts.reserve(per_class.size());
  for (const auto& xs : per_class) {
    std::vector<std::size_t> h(grid.node_count(), 0);
    for (std::size_t i = 0; i < xs.rows(); ++i) ++h[bmu(grid, stats, xs.row(i), metric, angle_weight)];
    counts.push_back(std::move(h));
  }
  return counts;
}

void save_som_weights_csv(const SomGrid& grid, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out << "r,c";
  for (std::size_t b = 0; b < grid.band_count(); ++b) out << ",b" << b;
  out << '\n';
  for (std::size_t j = 0; j < grid.node_count(); ++j) {
    out << grid.row_of(j) << ',' << grid.col_of(j);
    for (double v : grid.weight(j)) out << ',' << format_double(v);
    out << '\n';
  }
}

SomGrid load_som_weights_csv(const std::filesystem::path& path) {
  const Matrix raw = load_spectra_csv(path);
  if (raw.cols() < 3) fail(ErrorKind::Parse, path.string() + ": SOM weight rows need r,c,b0..");
  std::size_t rows = 0;
  std::size_t cols = 0;
  for (std::size_t i = 0; i < raw.rows(); ++i) {
    rows = std::max(rows, static_cast<std::size_t>(raw(i, 0)) + 1);
    cols = std::max(cols, static_cast<std::size_t>(raw(i, 1)) + 1);
  }
  if (rows * cols != raw.rows())
    fail(ErrorKind::Parse, path.string() + ": SOM weight file does not cover a full grid");
  Matrix weights(raw.rows(), raw.cols() - 2);
  for (std::size_t i = 0; i < raw.rows(); ++i) {
    const auto j = static_cast<std::size_t>(raw(i, 0)) * cols + static_cast<std::size_t>(raw(i, 1));
    for (std::size_t b = 0; b < weights.cols(); ++b) weights(j, b) = raw(i, b + 2);
  }
  return SomGrid(rows, cols, std::move(weights));
}

void save_histogram_csv(const SomGrid& grid, const std::vector<std::vector<std::size_t>>& counts,
                        const std::vector<std::string>& class_names,
                        const std::filesystem::path& path) {
  require_dims(counts.size() == class_names.size(), "histogram: one name per class required");
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out << "node,r,c";
  for (const auto& n : class_names) out << ',' << n;
  out << '\n';
  for (std::size_t j = 0; j < grid.node_count(); ++j) {
    out << j << ',' << grid.row_of(j) << ',' << grid.col_of(j);
    for (const auto& h : counts) out << ',' << h[j];
    out << '\n';
  }
}

}  // namespace somgan
