#include "somgan/ssgan.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "somgan/error.hpp"

namespace somgan {

namespace {
constexpr double kLogFloor = -27.631021115928547;  // log(1e-12)
}

std::string_view model_type_name(ModelType t) noexcept {
  switch (t) {
    case ModelType::SupSpectra: return "sup-spectra";
    case ModelType::SupSpectraSom: return "sup-spectra-som";
    case ModelType::SemiSpectra: return "semi-spectra";
    case ModelType::SemiSpectraSom: return "semi-spectra-som";
  }
  return "unknown";
}

ModelType parse_model_type(std::string_view name) {
  for (ModelType t : all_model_types())
    if (model_type_name(t) == name) return t;
  fail(ErrorKind::Config, "unknown model type '" + std::string(name) +
                              "' (sup-spectra|sup-spectra-som|semi-spectra|semi-spectra-som)");
}

const std::vector<ModelType>& all_model_types() {
  static const std::vector<ModelType> types{ModelType::SupSpectra, ModelType::SupSpectraSom,
                                            ModelType::SemiSpectra, ModelType::SemiSpectraSom};
  return types;
}

TrainingMode training_mode(ModelType t) noexcept {
  return (t == ModelType::SupSpectra || t == ModelType::SupSpectraSom) ? TrainingMode::Supervised
                                                                       : TrainingMode::SemiSupervised;
}

FeatureSet feature_set(ModelType t) noexcept {
  return (t == ModelType::SupSpectra || t == ModelType::SemiSpectra) ? FeatureSet::Spectra
                                                                     : FeatureSet::SpectraSom;
}

void TrainConfig::validate() const {
  if (epochs < 1) fail(ErrorKind::Config, "ssgan.epochs must be >= 1");
  if (batch_size < 1) fail(ErrorKind::Config, "ssgan.batch_size must be >= 1");
  if (arch.noise_dim < 1) fail(ErrorKind::Config, "ssgan.noise_dim must be >= 1");
  if (arch.generator_hidden.size() != 2)
    fail(ErrorKind::Config, "generator needs exactly two hidden widths");
  if (arch.spectral_path.empty() || arch.som_path.empty())
    fail(ErrorKind::Config, "discriminator paths need at least one layer");
  for (auto w : arch.generator_hidden)
    if (w == 0) fail(ErrorKind::Config, "layer widths must be positive");
  for (auto w : arch.spectral_path)
    if (w == 0) fail(ErrorKind::Config, "layer widths must be positive");
  for (auto w : arch.som_path)
    if (w == 0) fail(ErrorKind::Config, "layer widths must be positive");
  if (!(adam.lr > 0.0) || !(adam.beta1 >= 0.0 && adam.beta1 < 1.0) ||
      !(adam.beta2 >= 0.0 && adam.beta2 < 1.0) || !(adam.eps > 0.0))
    fail(ErrorKind::Config, "invalid Adam hyperparameters");
}

// ---------------------------------------------------------------------------
// Networks

Generator::Generator(const Architecture& arch, std::size_t bands, RandomStream& rng)
    : noise_dim_(arch.noise_dim), bands_(bands) {
  std::size_t in = arch.noise_dim;
  for (std::size_t width : arch.generator_hidden) {
    net_.add(nn::Dense(in, width, rng));
    net_.add(nn::BatchNorm(width));
    net_.add(nn::LeakyRelu(arch.leaky_slope));
    in = width;
  }
  net_.add(nn::WeightNormDense(in, bands, rng));
}

Matrix Generator::forward(const Matrix& z, nn::Mode mode) {
  require_dims(z.cols() == noise_dim_, "generator: noise width mismatch");
  return net_.forward(z, mode);
}

Discriminator::Discriminator(const Architecture& arch, std::size_t bands, std::size_t som_features,
                             std::size_t classes, RandomStream& rng)
    : bands_(bands), som_inputs_(som_features), classes_(classes) {
  if (classes < 2) fail(ErrorKind::Config, "discriminator needs K >= 2");
  std::size_t in = bands;
  for (std::size_t width : arch.spectral_path) {
    spectral_.add(nn::WeightNormDense(in, width, rng));
    spectral_.add(nn::LeakyRelu(arch.leaky_slope));
    in = width;
  }
  spectral_width_ = in;
  if (som_features > 0) {
    in = som_features;
    for (std::size_t width : arch.som_path) {
      som_.add(nn::WeightNormDense(in, width, rng));
      som_.add(nn::LeakyRelu(arch.leaky_slope));
      in = width;
    }
    som_width_ = in;
  }
  head_ = nn::WeightNormDense(spectral_width_ + som_width_, classes + 1, rng);
}

void Discriminator::check_inputs(const Matrix& spectra, const Matrix* som) const {
  require_dims(spectra.cols() == bands_, "discriminator: spectral width mismatch");
  if (uses_som() && !som)
    fail(ErrorKind::Config, "discriminator with SOM path requires SOM features");
  if (!uses_som() && som)
    fail(ErrorKind::Config, "spectra-only discriminator does not accept SOM features");
  if (som) {
    require_dims(som->cols() == som_inputs_, "discriminator: SOM feature width mismatch");
    require_dims(som->rows() == spectra.rows(), "discriminator: SOM/spectra row mismatch");
  }
}

DiscriminatorOutput Discriminator::forward(const Matrix& spectra, const Matrix* som, nn::Mode mode) {
  check_inputs(spectra, som);
  last_rows_ = spectra.rows();
  DiscriminatorOutput out;
  out.features = spectral_.forward(spectra, mode);
  if (som) out.features = hconcat(out.features, som_.forward(*som, mode));
  out.logits = head_.forward(out.features, mode);
  return out;
}

Matrix Discriminator::backward(const Matrix& dlogits) {
  return backward_features(head_.backward(dlogits));
}

Matrix Discriminator::backward_features(const Matrix& dfeatures) {
  require_dims(dfeatures.rows() == last_rows_ && dfeatures.cols() == feature_width(),
               "discriminator: feature gradient shape mismatch");
  if (!uses_som()) return spectral_.backward(dfeatures);
  Matrix dspec(dfeatures.rows(), spectral_width_);
  Matrix dsom(dfeatures.rows(), som_width_);
  for (std::size_t i = 0; i < dfeatures.rows(); ++i) {
    const auto row = dfeatures.row(i);
    std::copy_n(row.begin(), spectral_width_, dspec.row(i).begin());
    std::copy(row.begin() + static_cast<std::ptrdiff_t>(spectral_width_), row.end(), dsom.row(i).begin());
  }
  som_.backward(dsom);
  return spectral_.backward(dspec);
}

void Discriminator::init_from_batch(const Matrix& spectra, const Matrix* som) {
  check_inputs(spectra, som);
  Matrix f = spectral_.init_from_batch(spectra);
  if (som) f = hconcat(f, som_.init_from_batch(*som));
  head_.init_from_batch(f);
}

std::vector<nn::Parameter*> Discriminator::parameters() {
  auto out = spectral_.parameters();
  if (uses_som()) {
    const auto s = som_.parameters();
    out.insert(out.end(), s.begin(), s.end());
  }
  const auto h = head_.parameters();
  out.insert(out.end(), h.begin(), h.end());
  return out;
}

void Discriminator::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

std::vector<nn::NamedArray> Discriminator::export_state(const std::string& prefix) const {
  auto out = spectral_.export_state(prefix + "spectral.");
  if (uses_som()) {
    const auto s = som_.export_state(prefix + "som.");
    out.insert(out.end(), s.begin(), s.end());
  }
  auto& head = const_cast<nn::WeightNormDense&>(head_);
  for (auto* p : head.parameters()) out.push_back({prefix + "head." + p->name, p->value});
  return out;
}

void Discriminator::import_state(const std::string& prefix, const std::map<std::string, Matrix>& arrays) {
  spectral_.import_state(prefix + "spectral.", arrays);
  if (uses_som()) som_.import_state(prefix + "som.", arrays);
  for (auto* p : head_.parameters()) {
    const auto it = arrays.find(prefix + "head." + p->name);
    if (it == arrays.end() || !it->second.same_shape(p->value))
      fail(ErrorKind::Parse, "checkpoint is missing or misshapes " + prefix + "head." + p->name);
    p->value = it->second;
  }
}

// ---------------------------------------------------------------------------
// Losses

nn::LossGrad loss_supervised(const Matrix& logits, std::span<const Label> labels, std::size_t classes) {
  require_dims(logits.cols() == classes + 1, "supervised loss: expected K+1 logits");
  require_dims(labels.size() == logits.rows(), "supervised loss: one label per row required");
  nn::LossGrad out{0.0, Matrix(logits.rows(), logits.cols())};
  if (logits.rows() == 0) return out;
  const double inv_n = 1.0 / static_cast<double>(logits.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto row = logits.row(i);
    const Label& label = labels[i];
    if (label.is_unlabeled())
      fail(ErrorKind::Precondition, "supervised loss received an unlabeled sample");
    if (label.is_inlier()) {
      const auto k = static_cast<std::size_t>(label.class_index());
      require_dims(k < classes, "supervised loss: class index out of range");
      const double lse = nn::log_sum_exp(row.subspan(0, classes));
      out.value -= row[k] - lse;
      for (std::size_t c = 0; c < classes; ++c)
        out.grad(i, c) = (std::exp(row[c] - lse) - (c == k ? 1.0 : 0.0)) * inv_n;
    } else {
      const double lse = nn::log_sum_exp(row);
      out.value -= row[classes] - lse;
      for (std::size_t c = 0; c <= classes; ++c)
        out.grad(i, c) = (std::exp(row[c] - lse) - (c == classes ? 1.0 : 0.0)) * inv_n;
    }
  }
  out.value *= inv_n;
  return out;
}

nn::LossGrad loss_unsupervised_real(const Matrix& logits) {
  require_dims(logits.cols() >= 3, "unsupervised loss: expected K+1 >= 3 logits");
  const std::size_t k = logits.cols() - 1;
  nn::LossGrad out{0.0, Matrix(logits.rows(), logits.cols())};
  if (logits.rows() == 0) return out;
  const double inv_n = 1.0 / static_cast<double>(logits.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto row = logits.row(i);
    const double lse_all = nn::log_sum_exp(row);
    const double lse_in = nn::log_sum_exp(row.subspan(0, k));
    const double log_not_fake = lse_in - lse_all;  // log(1 - p_K)
    if (log_not_fake <= kLogFloor) {
      out.value -= kLogFloor;
      continue;
    }
    out.value -= log_not_fake;
    for (std::size_t c = 0; c <= k; ++c) {
      const double p = std::exp(row[c] - lse_all);
      const double q = c < k ? std::exp(row[c] - lse_in) : 0.0;
      out.grad(i, c) = (p - q) * inv_n;
    }
  }
  out.value *= inv_n;
  return out;
}

nn::LossGrad loss_unsupervised_fake(const Matrix& logits) {
  require_dims(logits.cols() >= 3, "unsupervised loss: expected K+1 >= 3 logits");
  const std::size_t k = logits.cols() - 1;
  nn::LossGrad out{0.0, Matrix(logits.rows(), logits.cols())};
  if (logits.rows() == 0) return out;
  const double inv_n = 1.0 / static_cast<double>(logits.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto row = logits.row(i);
    const double lse_all = nn::log_sum_exp(row);
    const double log_fake = row[k] - lse_all;
    if (log_fake <= kLogFloor) {
      out.value -= kLogFloor;
      continue;
    }
    out.value -= log_fake;
    for (std::size_t c = 0; c <= k; ++c)
      out.grad(i, c) = (std::exp(row[c] - lse_all) - (c == k ? 1.0 : 0.0)) * inv_n;
  }
  out.value *= inv_n;
  return out;
}

UnsupervisedLoss loss_unsupervised_D(const Matrix& real_logits, const Matrix& fake_logits) {
  auto real = loss_unsupervised_real(real_logits);
  auto fake = loss_unsupervised_fake(fake_logits);
  UnsupervisedLoss out;
  out.real_term = real.value;
  out.fake_term = fake.value;
  out.value = real.value + fake.value;
  out.grad_real = std::move(real.grad);
  out.grad_fake = std::move(fake.grad);
  return out;
}

nn::LossGrad loss_generator_fm(const Matrix& f_real, const Matrix& f_fake) {
  require_dims(f_real.cols() == f_fake.cols(), "feature matching: feature widths differ");
  if (f_real.rows() == 0 || f_fake.rows() == 0)
    fail(ErrorKind::Precondition, "feature matching needs non-empty batches");
  const std::size_t w = f_real.cols();
  std::vector<double> diff(w, 0.0);
  for (std::size_t i = 0; i < f_fake.rows(); ++i)
    for (std::size_t j = 0; j < w; ++j) diff[j] += f_fake(i, j) / static_cast<double>(f_fake.rows());
  for (std::size_t i = 0; i < f_real.rows(); ++i)
    for (std::size_t j = 0; j < w; ++j) diff[j] -= f_real(i, j) / static_cast<double>(f_real.rows());
  nn::LossGrad out{0.0, Matrix(f_fake.rows(), w)};
  for (double d : diff) out.value += d * d;
  const double scale = 2.0 / static_cast<double>(f_fake.rows());
  for (std::size_t i = 0; i < f_fake.rows(); ++i)
    for (std::size_t j = 0; j < w; ++j) out.grad(i, j) = scale * diff[j];
  return out;
}

DiscriminatorLoss discriminator_loss(Discriminator& d, const DiscriminatorBatch& batch) {
  DiscriminatorLoss out;
  if (batch.labeled.rows() > 0) {
    const auto o = d.forward(batch.labeled, batch.labeled_som, nn::Mode::Train);
    const auto sup = loss_supervised(o.logits, batch.labels, d.class_count());
    d.backward(sup.grad);
    out.supervised = sup.value;
  }
  if (batch.unlabeled) {
    const auto o = d.forward(*batch.unlabeled, batch.unlabeled_som, nn::Mode::Train);
    const auto real = loss_unsupervised_real(o.logits);
    d.backward(real.grad);
    out.unsupervised += real.value;
  }
  if (batch.fake) {
    const auto o = d.forward(*batch.fake, batch.fake_som, nn::Mode::Train);
    const auto fake = loss_unsupervised_fake(o.logits);
    d.backward(fake.grad);
    out.unsupervised += fake.value;
  }
  out.total = out.supervised + out.unsupervised;
  return out;
}

GeneratorStep generator_loss(Generator& g, Discriminator& d, const Matrix& z, const Matrix& real,
                             const Matrix* real_som,
                             const std::function<Matrix(const Matrix&)>& fake_som_of) {
  const Matrix f_real = d.forward(real, real_som, nn::Mode::Train).features;
  const Matrix fake = g.forward(z, nn::Mode::Train);
  std::optional<Matrix> fake_som;
  if (d.uses_som()) fake_som = fake_som_of(fake);
  const auto o = d.forward(fake, fake_som ? &*fake_som : nullptr, nn::Mode::Train);
  const auto fm = loss_generator_fm(f_real, o.features);
  const Matrix dfake = d.backward_features(fm.grad);
  g.backward(dfake);
  return {fm.value};
}

// ---------------------------------------------------------------------------
// Training

namespace {

std::vector<std::size_t> draw_with_replacement(std::size_t n, std::size_t count, RandomStream& rng) {
  std::vector<std::size_t> idx(count);
  for (auto& i : idx) i = rng.index(n);
  return idx;
}

void check_finite(double v, int epoch, const char* what) {
  if (!std::isfinite(v))
    fail(ErrorKind::Divergence, std::string("training diverged at epoch ") + std::to_string(epoch) +
                                    " (" + what + " loss is not finite)");
}

}  // namespace

Matrix SsganModel::logits(const Matrix& raw_spectra) const {
  require_dims(raw_spectra.cols() == band_count(), "model: band count mismatch");
  Discriminator d = discriminator;
  const Matrix x = standardizer.apply(raw_spectra);
  if (som) {
    const Matrix s = som->features(raw_spectra);
    return d.forward(x, &s, nn::Mode::Eval).logits;
  }
  return d.forward(x, nullptr, nn::Mode::Eval).logits;
}

TrainResult train(const TrainingSet& data, const std::optional<SomPipeline>& som,
                  const TrainConfig& cfg) {
  cfg.validate();
  const bool semi = cfg.mode == TrainingMode::SemiSupervised;
  const bool with_som = cfg.features == FeatureSet::SpectraSom;
  if (with_som && !som) fail(ErrorKind::Config, "spectra+som model requires a trained SOM pipeline");
  if (!with_som && som) fail(ErrorKind::Config, "spectra-only model must not be given a SOM pipeline");
  if (data.labeled.rows() == 0) fail(ErrorKind::Precondition, "training needs labeled samples");
  if (data.labels.size() != data.labeled.rows())
    fail(ErrorKind::Dimension, "training set: one label per labeled spectrum required");
  if (semi && data.unlabeled.rows() == 0)
    fail(ErrorKind::Precondition, "semi-supervised training needs unlabeled samples");
  for (const auto& l : data.labels)
    if (l.is_unlabeled()) fail(ErrorKind::Precondition, "labeled partition contains an unlabeled sample");

  const std::size_t bands = data.labeled.cols();
  TrainResult result;
  SsganModel& model = result.model;
  model.config = cfg;
  model.class_count = data.class_count;
  model.standardizer = Standardizer::fit(vconcat(data.labeled, data.unlabeled));
  if (with_som) model.som = som;

  RandomStream init_rng(derive_seed(cfg.seed, "init"));
  RandomStream batch_rng(derive_seed(cfg.seed, "batches"));
  RandomStream noise_rng(derive_seed(cfg.seed, "noise"));

  model.discriminator = Discriminator(cfg.arch, bands, with_som ? som->feature_count() : 0,
                                      data.class_count, init_rng);
  if (semi) model.generator = Generator(cfg.arch, bands, init_rng);

  const Matrix labeled = model.standardizer.apply(data.labeled);
  const Matrix unlabeled = data.unlabeled.rows() ? model.standardizer.apply(data.unlabeled) : Matrix();
  Matrix labeled_som;
  Matrix unlabeled_som;
  if (with_som) {
    labeled_som = som->features(data.labeled);
    if (semi) unlabeled_som = som->features(data.unlabeled);
  }
  const Standardizer& z = model.standardizer;
  const auto fake_som_of = [&](const Matrix& fake_std) { return som->features(z.invert(fake_std)); };

  const std::size_t batch = cfg.batch_size;
  const std::size_t pool = data.unlabeled.rows() ? data.unlabeled.rows() : data.labeled.rows();
  const std::size_t steps_per_epoch = (pool + batch - 1) / batch;

  // Data-dependent init of the weight-normalised layers.
  {
    const auto idx = draw_with_replacement(labeled.rows(), batch, batch_rng);
    Matrix init_x = labeled.gather_rows(idx);
    Matrix init_s = with_som ? labeled_som.gather_rows(idx) : Matrix();
    if (semi) {
      const auto uidx = draw_with_replacement(unlabeled.rows(), batch, batch_rng);
      init_x = vconcat(init_x, unlabeled.gather_rows(uidx));
      if (with_som) init_s = vconcat(init_s, unlabeled_som.gather_rows(uidx));
      model.generator.init_from_batch(nn::sample_uniform_noise(batch, cfg.arch.noise_dim, noise_rng));
    }
    model.discriminator.init_from_batch(init_x, with_som ? &init_s : nullptr);
  }

  nn::Adam adam_d(cfg.adam);
  nn::Adam adam_g(cfg.adam);
  std::vector<std::size_t> order(unlabeled.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t cursor = order.size();

  auto next_unlabeled = [&]() {
    std::vector<std::size_t> idx(batch);
    for (auto& i : idx) {
      if (cursor >= order.size()) {
        std::shuffle(order.begin(), order.end(), batch_rng.engine());
        cursor = 0;
      }
      i = order[cursor++];
    }
    return idx;
  };

  Discriminator& d = model.discriminator;
  Generator& g = model.generator;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    EpochLosses acc;
    for (std::size_t step = 0; step < steps_per_epoch; ++step) {
      const auto lidx = draw_with_replacement(labeled.rows(), batch, batch_rng);
      DiscriminatorBatch db;
      db.labeled = labeled.gather_rows(lidx);
      Matrix lsom = with_som ? labeled_som.gather_rows(lidx) : Matrix();
      if (with_som) db.labeled_som = &lsom;
      db.labels.reserve(batch);
      for (auto i : lidx) db.labels.push_back(data.labels[i]);

      Matrix ubatch, usom, fake, fsom;
      std::vector<std::size_t> uidx;
      if (semi) {
        uidx = next_unlabeled();
        ubatch = unlabeled.gather_rows(uidx);
        db.unlabeled = &ubatch;
        if (with_som) {
          usom = unlabeled_som.gather_rows(uidx);
          db.unlabeled_som = &usom;
        }
        fake = g.forward(nn::sample_uniform_noise(batch, cfg.arch.noise_dim, noise_rng), nn::Mode::Train);
        db.fake = &fake;
        if (with_som) {
          fsom = fake_som_of(fake);
          db.fake_som = &fsom;
        }
      }

      d.zero_grad();
      const auto dl = discriminator_loss(d, db);
      check_finite(dl.total, epoch, "discriminator");
      adam_d.step(d.parameters());
      acc.supervised += dl.supervised;
      acc.unsupervised += dl.unsupervised;
      acc.discriminator_total += dl.total;

      if (semi) {
        g.zero_grad();
        const Matrix znoise = nn::sample_uniform_noise(batch, cfg.arch.noise_dim, noise_rng);
        const auto gs = generator_loss(g, d, znoise, ubatch, with_som ? &usom : nullptr, fake_som_of);
        check_finite(gs.fm_loss, epoch, "feature matching");
        adam_g.step(g.parameters());
        d.zero_grad();
        acc.feature_matching += gs.fm_loss;
      }
    }
    const double n = static_cast<double>(steps_per_epoch);
    acc.supervised /= n;
    acc.unsupervised /= n;
    acc.discriminator_total /= n;
    acc.feature_matching /= n;
    result.history.push_back(acc);
  }
  return result;
}

std::vector<double> outlier_scores(const Matrix& logits) {
  const Matrix p = nn::softmax(logits);
  std::vector<double> out(p.rows());
  for (std::size_t i = 0; i < p.rows(); ++i) out[i] = p(i, p.cols() - 1);
  return out;
}

std::vector<std::size_t> inlier_classes(const Matrix& logits) {
  std::vector<std::size_t> out(logits.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto row = logits.row(i).subspan(0, logits.cols() - 1);
    out[i] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

double outlier_score(const SsganModel& model, std::span<const double> raw_spectrum) {
  Matrix x(1, raw_spectrum.size());
  std::copy(raw_spectrum.begin(), raw_spectrum.end(), x.row(0).begin());
  return outlier_scores(model.logits(x)).front();
}

std::size_t classify_inlier(const SsganModel& model, std::span<const double> raw_spectrum) {
  Matrix x(1, raw_spectrum.size());
  std::copy(raw_spectrum.begin(), raw_spectrum.end(), x.row(0).begin());
  return inlier_classes(model.logits(x)).front();
}

}  // namespace somgan
