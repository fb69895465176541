#include "somgan/membership.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "somgan/core.hpp"
#include "somgan/error.hpp"

namespace somgan {

double membership(double d, double alpha, double beta) noexcept {
  const double z = alpha * (d - beta);
  if (z > 0.0) {
    const double e = std::exp(-z);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(z));
}

std::vector<double> SigmoidLayer::apply(std::span<const double> distances) const {
  require_dims(distances.size() == size(), "sigmoid layer: distance count mismatch");
  std::vector<double> out(distances.size());
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = membership(distances[j], alpha[j], beta[j]);
  return out;
}

Matrix SigmoidLayer::apply(const Matrix& distances) const {
  require_dims(distances.cols() == size(), "sigmoid layer: distance count mismatch");
  Matrix out(distances.rows(), distances.cols());
  for (std::size_t i = 0; i < distances.rows(); ++i)
    for (std::size_t j = 0; j < size(); ++j) out(i, j) = membership(distances(i, j), alpha[j], beta[j]);
  return out;
}

std::vector<double> target_vector(const SomGrid& grid, std::size_t bmu_node) {
  std::vector<double> t(grid.node_count(), 0.0);
  const auto br = static_cast<long>(grid.row_of(bmu_node));
  const auto bc = static_cast<long>(grid.col_of(bmu_node));
  for (long dr = -1; dr <= 1; ++dr) {
    for (long dc = -1; dc <= 1; ++dc) {
      const long r = br + dr;
      const long c = bc + dc;
      if (r < 0 || c < 0 || r >= static_cast<long>(grid.rows()) || c >= static_cast<long>(grid.cols()))
        continue;
      const int manhattan = static_cast<int>(std::abs(dr) + std::abs(dc));
      const double v = manhattan == 0 ? kTargetBmu : manhattan == 1 ? kTargetDirect : kTargetBlock;
      t[grid.index(static_cast<std::size_t>(r), static_cast<std::size_t>(c))] = v;
    }
  }
  return t;
}

namespace {
std::size_t argmin_row(std::span<const double> row) {
  return static_cast<std::size_t>(std::min_element(row.begin(), row.end()) - row.begin());
}
}  // namespace

Matrix make_targets_from_distances(const SomGrid& grid, const Matrix& distances) {
  require_dims(distances.cols() == grid.node_count(), "targets: distance width != node count");
  Matrix out(distances.rows(), grid.node_count());
  for (std::size_t i = 0; i < distances.rows(); ++i) {
    const auto t = target_vector(grid, argmin_row(distances.row(i)));
    std::copy(t.begin(), t.end(), out.row(i).begin());
  }
  return out;
}

Matrix make_targets(const SomGrid& grid, const NodeStats& stats, const Matrix& samples,
                    BmuMetric metric, double angle_weight) {
  Matrix out(samples.rows(), grid.node_count());
  for (std::size_t i = 0; i < samples.rows(); ++i) {
    const auto t = target_vector(grid, bmu(grid, stats, samples.row(i), metric, angle_weight));
    std::copy(t.begin(), t.end(), out.row(i).begin());
  }
  return out;
}

SigmoidLayer init_sigmoids(const Matrix& distances) {
  if (distances.rows() == 0) fail(ErrorKind::Precondition, "init_sigmoids: no samples");
  const std::size_t nodes = distances.cols();
  std::vector<double> sum(nodes, 0.0);
  std::vector<std::size_t> count(nodes, 0);
  double global = 0.0;
  for (std::size_t i = 0; i < distances.rows(); ++i) {
    const std::size_t b = argmin_row(distances.row(i));
    sum[b] += distances(i, b);
    ++count[b];
    for (double d : distances.row(i)) global += d;
  }
  global /= static_cast<double>(distances.size());
  // A node whose samples sit exactly on it would get beta = 0 and an
  // unbounded slope; keep beta on the data's distance scale.
  const double beta_floor = std::max(1e-3 * global, 1e-12);
  SigmoidLayer layer;
  layer.alpha.resize(nodes);
  layer.beta.resize(nodes);
  for (std::size_t j = 0; j < nodes; ++j) {
    const double beta = count[j] ? sum[j] / static_cast<double>(count[j]) : global;
    layer.beta[j] = std::max(beta, beta_floor);
    layer.alpha[j] = 4.0 / layer.beta[j];
  }
  return layer;
}

double sigmoid_objective(const SigmoidLayer& layer, const Matrix& distances, const Matrix& targets) {
  require_dims(distances.same_shape(targets), "sigmoid objective: distances/targets misaligned");
  require_dims(distances.cols() == layer.size(), "sigmoid objective: node count mismatch");
  double e = 0.0;
  for (std::size_t i = 0; i < distances.rows(); ++i)
    for (std::size_t j = 0; j < layer.size(); ++j) {
      const double r = targets(i, j) - membership(distances(i, j), layer.alpha[j], layer.beta[j]);
      e += 0.5 * r * r;
    }
  return e;
}

SigmoidGradient sigmoid_gradient(const SigmoidLayer& layer, const Matrix& distances,
                                 const Matrix& targets) {
  require_dims(distances.same_shape(targets), "sigmoid gradient: distances/targets misaligned");
  require_dims(distances.cols() == layer.size(), "sigmoid gradient: node count mismatch");
  SigmoidGradient g{std::vector<double>(layer.size(), 0.0), std::vector<double>(layer.size(), 0.0)};
  for (std::size_t i = 0; i < distances.rows(); ++i)
    for (std::size_t j = 0; j < layer.size(); ++j) {
      const double d = distances(i, j);
      const double o = membership(d, layer.alpha[j], layer.beta[j]);
      const double common = (o - targets(i, j)) * o * (1.0 - o);
      g.alpha[j] += common * -(d - layer.beta[j]);
      g.beta[j] += common * layer.alpha[j];
    }
  return g;
}

namespace {

double column_objective(const Matrix& distances, const Matrix& targets, std::size_t j, double alpha,
                        double beta) {
  double e = 0.0;
  for (std::size_t i = 0; i < distances.rows(); ++i) {
    const double r = targets(i, j) - membership(distances(i, j), alpha, beta);
    e += 0.5 * r * r;
  }
  return e;
}

}  // namespace

SigmoidTrainResult train_sigmoids(SigmoidLayer layer, const Matrix& distances,
                                  const Matrix& targets, const SigmoidTrainConfig& cfg) {
  if (!(cfg.lr > 0.0)) fail(ErrorKind::Config, "membership.lr must be positive");
  if (cfg.epochs < 0) fail(ErrorKind::Config, "membership.epochs must be >= 0");
  require_dims(distances.same_shape(targets), "train_sigmoids: distances/targets misaligned");
  require_dims(distances.cols() == layer.size(), "train_sigmoids: node count mismatch");
  if (distances.rows() == 0) fail(ErrorKind::Precondition, "train_sigmoids: no samples");

  // E is a sum of independent per-node terms E_j(alpha_j, beta_j). Each
  // node steps on the per-sample mean of E_j in distance units normalised
  // by that node's mean D* (alpha' = alpha * s_j, beta' = beta / s_j), and
  // the step is halved until E_j does not increase.
  const std::size_t nodes = layer.size();
  const double inv_n = 1.0 / static_cast<double>(distances.rows());
  std::vector<double> scale(nodes, 0.0), rate(nodes, cfg.lr), column(nodes, 0.0);
  for (std::size_t j = 0; j < nodes; ++j) {
    for (std::size_t i = 0; i < distances.rows(); ++i) scale[j] += distances(i, j);
    scale[j] = std::max(scale[j] * inv_n, 1e-12);
  }

  SigmoidTrainResult result;
  result.loss_trace.reserve(static_cast<std::size_t>(cfg.epochs) + 1);
  double e = sigmoid_objective(layer, distances, targets);
  if (!std::isfinite(e)) fail(ErrorKind::Divergence, "sigmoid training diverged at epoch 0");
  for (std::size_t j = 0; j < nodes; ++j)
    column[j] = column_objective(distances, targets, j, layer.alpha[j], layer.beta[j]);
  result.loss_trace.push_back(e);
  constexpr int kMaxHalvings = 40;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto g = sigmoid_gradient(layer, distances, targets);
    for (std::size_t j = 0; j < nodes; ++j) {
      const double s2 = scale[j] * scale[j];
      for (int h = 0; h < kMaxHalvings; ++h) {
        const double a = std::max(layer.alpha[j] - rate[j] * inv_n / s2 * g.alpha[j], cfg.alpha_floor);
        const double b = layer.beta[j] - rate[j] * inv_n * s2 * g.beta[j];
        const double ej = column_objective(distances, targets, j, a, b);
        if (!std::isfinite(ej))
          fail(ErrorKind::Divergence, "sigmoid training diverged at epoch " + std::to_string(epoch));
        if (ej <= column[j]) {
          layer.alpha[j] = a;
          layer.beta[j] = b;
          column[j] = ej;
          break;
        }
        rate[j] *= 0.5;
      }
    }
    e = sigmoid_objective(layer, distances, targets);
    if (!std::isfinite(e))
      fail(ErrorKind::Divergence, "sigmoid training diverged at epoch " + std::to_string(epoch));
    result.loss_trace.push_back(e);
  }
  result.layer = std::move(layer);
  return result;
}

std::vector<double> SomPipeline::features(std::span<const double> raw_spectrum) const {
  return sigmoids.apply(dstar_features(grid, stats, raw_spectrum, angle_weight));
}

Matrix SomPipeline::features(const Matrix& raw_spectra) const {
  return sigmoids.apply(dstar_features(grid, stats, raw_spectra, angle_weight));
}

void save_sigmoids_csv(const SigmoidLayer& layer, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out << "j,alpha,beta\n";
  for (std::size_t j = 0; j < layer.size(); ++j)
    out << j << ',' << format_double(layer.alpha[j]) << ',' << format_double(layer.beta[j]) << '\n';
}

SigmoidLayer load_sigmoids_csv(const std::filesystem::path& path) {
  const Matrix raw = load_spectra_csv(path);
  if (raw.cols() != 3) fail(ErrorKind::Parse, path.string() + ": expected j,alpha,beta rows");
  SigmoidLayer layer;
  layer.alpha.assign(raw.rows(), 0.0);
  layer.beta.assign(raw.rows(), 0.0);
  for (std::size_t i = 0; i < raw.rows(); ++i) {
    const auto j = static_cast<std::size_t>(raw(i, 0));
    if (j >= raw.rows()) fail(ErrorKind::Parse, path.string() + ": node index out of range");
    layer.alpha[j] = raw(i, 1);
    layer.beta[j] = raw(i, 2);
  }
  return layer;
}

}  // namespace somgan
