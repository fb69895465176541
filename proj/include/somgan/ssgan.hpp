#pragma once

// Semi-supervised GAN with an explicit (K+1)-th "not an inlier" logit.
//
// Discriminator loss (minimised):
//   supervised   inliers:          -log softmax_{0..K-1}(logits)[k]
//                labeled outliers: -log softmax_{0..K}(logits)[K]
//   unsupervised -mean log(1 - p(K|x_real)) - mean log p(K|G(z))
// Generator loss: || mean f(x_real) - mean f(G(z)) ||^2 with f the
// concatenated hidden layer feeding the final logits.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "somgan/core.hpp"
#include "somgan/membership.hpp"
#include "somgan/nn.hpp"

namespace somgan {

enum class TrainingMode { Supervised, SemiSupervised };
enum class FeatureSet { Spectra, SpectraSom };

enum class ModelType { SupSpectra, SupSpectraSom, SemiSpectra, SemiSpectraSom };

std::string_view model_type_name(ModelType t) noexcept;
/// Accepts exactly sup-spectra, sup-spectra-som, semi-spectra, semi-spectra-som.
ModelType parse_model_type(std::string_view name);
const std::vector<ModelType>& all_model_types();
TrainingMode training_mode(ModelType t) noexcept;
FeatureSet feature_set(ModelType t) noexcept;

struct Architecture {
  std::size_t noise_dim = 50;
  std::vector<std::size_t> generator_hidden{256, 256};
  std::vector<std::size_t> spectral_path{256, 128};
  std::vector<std::size_t> som_path{64, 64};
  double leaky_slope = nn::kLeakySlope;
};

struct TrainConfig {
  int epochs = 12;
  std::size_t batch_size = 64;
  Architecture arch;
  nn::AdamConfig adam;
  std::uint64_t seed = 0;
  TrainingMode mode = TrainingMode::SemiSupervised;
  FeatureSet features = FeatureSet::SpectraSom;

  void validate() const;
};

class Generator {
 public:
  Generator() = default;
  /// [dense -> batchnorm -> leaky ReLU] per hidden width, then a
  /// weight-normalised dense layer to `bands` outputs.
  Generator(const Architecture& arch, std::size_t bands, RandomStream& rng);

  Matrix forward(const Matrix& z, nn::Mode mode);
  Matrix backward(const Matrix& dy) { return net_.backward(dy); }
  std::vector<nn::Parameter*> parameters() { return net_.parameters(); }
  void zero_grad() { net_.zero_grad(); }
  void init_from_batch(const Matrix& z) { net_.init_from_batch(z); }

  std::size_t noise_dim() const noexcept { return noise_dim_; }
  std::size_t band_count() const noexcept { return bands_; }
  nn::Sequential& net() noexcept { return net_; }
  const nn::Sequential& net() const noexcept { return net_; }

 private:
  std::size_t noise_dim_ = 0;
  std::size_t bands_ = 0;
  nn::Sequential net_;
};

struct DiscriminatorOutput {
  Matrix logits;    // n x (K+1)
  Matrix features;  // n x F, input of the final layer
};

class Discriminator {
 public:
  Discriminator() = default;
  /// `som_features` = 0 builds the spectra-only variant with no SOM path.
  Discriminator(const Architecture& arch, std::size_t bands, std::size_t som_features,
                std::size_t classes, RandomStream& rng);

  /// Throws Error(Config) when SOM features are supplied to a spectra-only
  /// discriminator or missing for a dual-path one.
  DiscriminatorOutput forward(const Matrix& spectra, const Matrix* som, nn::Mode mode);
  /// Backpropagates a logits gradient; returns the spectral-input gradient.
  Matrix backward(const Matrix& dlogits);
  /// Backpropagates a gradient on the feature layer (skipping the head).
  Matrix backward_features(const Matrix& dfeatures);

  void init_from_batch(const Matrix& spectra, const Matrix* som);
  std::vector<nn::Parameter*> parameters();
  void zero_grad();

  bool uses_som() const noexcept { return som_inputs_ > 0; }
  std::size_t class_count() const noexcept { return classes_; }
  std::size_t feature_width() const noexcept { return spectral_width_ + som_width_; }
  std::size_t band_count() const noexcept { return bands_; }
  std::size_t som_inputs() const noexcept { return som_inputs_; }

  std::vector<nn::NamedArray> export_state(const std::string& prefix) const;
  void import_state(const std::string& prefix, const std::map<std::string, Matrix>& arrays);

 private:
  void check_inputs(const Matrix& spectra, const Matrix* som) const;

  std::size_t bands_ = 0;
  std::size_t som_inputs_ = 0;
  std::size_t classes_ = 0;
  std::size_t spectral_width_ = 0;
  std::size_t som_width_ = 0;
  std::size_t last_rows_ = 0;
  nn::Sequential spectral_;
  nn::Sequential som_;
  nn::WeightNormDense head_;
};

/// Throws Error(Precondition) for an unlabeled sample.
nn::LossGrad loss_supervised(const Matrix& logits, std::span<const Label> labels, std::size_t classes);

/// -mean log(1 - p(K|x)) over real rows (log argument floored at 1e-12).
nn::LossGrad loss_unsupervised_real(const Matrix& logits);
/// -mean log p(K|G(z)) over generated rows (log argument floored at 1e-12).
nn::LossGrad loss_unsupervised_fake(const Matrix& logits);

struct UnsupervisedLoss {
  double value = 0.0;
  double real_term = 0.0;
  double fake_term = 0.0;
  Matrix grad_real;
  Matrix grad_fake;
};
UnsupervisedLoss loss_unsupervised_D(const Matrix& real_logits, const Matrix& fake_logits);

/// Squared L2 distance of batch feature means; gradient is w.r.t. f_fake.
nn::LossGrad loss_generator_fm(const Matrix& f_real, const Matrix& f_fake);

/// Inputs for one discriminator update. Absent optional parts are skipped.
struct DiscriminatorBatch {
  Matrix labeled;
  const Matrix* labeled_som = nullptr;
  std::vector<Label> labels;
  const Matrix* unlabeled = nullptr;
  const Matrix* unlabeled_som = nullptr;
  const Matrix* fake = nullptr;
  const Matrix* fake_som = nullptr;
};

struct DiscriminatorLoss {
  double supervised = 0.0;
  double unsupervised = 0.0;
  double total = 0.0;
};

/// Computes the discriminator objective and accumulates its parameter
/// gradients (callers zero them first).
DiscriminatorLoss discriminator_loss(Discriminator& d, const DiscriminatorBatch& batch);

/// Feature-matching loss for the generator. The discriminator is run on
/// `real` and on G(z); gradients reach the generator only through the
/// spectral input of the discriminator. `fake_som_of` maps the generated
/// (standardized) spectra to SOM features and is treated as a constant.
struct GeneratorStep {
  double fm_loss = 0.0;
};
GeneratorStep generator_loss(Generator& g, Discriminator& d, const Matrix& z, const Matrix& real,
                             const Matrix* real_som,
                             const std::function<Matrix(const Matrix&)>& fake_som_of);

struct EpochLosses {
  double supervised = 0.0;
  double unsupervised = 0.0;
  double discriminator_total = 0.0;
  double feature_matching = 0.0;
};

/// Raw spectra used for one training run.
struct TrainingSet {
  Matrix labeled;
  std::vector<Label> labels;
  Matrix unlabeled;
  std::size_t class_count = 2;
};

struct SsganModel {
  TrainConfig config;
  std::size_t class_count = 0;
  Standardizer standardizer;
  Generator generator;
  Discriminator discriminator;
  std::optional<SomPipeline> som;

  std::size_t band_count() const noexcept { return standardizer.band_count(); }
  /// Eval-mode logits for raw (unstandardized) spectra.
  Matrix logits(const Matrix& raw_spectra) const;
};

struct TrainResult {
  SsganModel model;
  std::vector<EpochLosses> history;
};

/// Throws Error(Divergence) naming the epoch on a non-finite loss.
TrainResult train(const TrainingSet& data, const std::optional<SomPipeline>& som,
                  const TrainConfig& cfg);

/// p(y = K | x) under the full (K+1)-way softmax.
std::vector<double> outlier_scores(const Matrix& logits);
/// argmax over the first K logits, lowest index on ties.
std::vector<std::size_t> inlier_classes(const Matrix& logits);

double outlier_score(const SsganModel& model, std::span<const double> raw_spectrum);
std::size_t classify_inlier(const SsganModel& model, std::span<const double> raw_spectrum);

}  // namespace somgan
