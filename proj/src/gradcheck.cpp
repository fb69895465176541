#include "somgan/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "somgan/membership.hpp"
#include "somgan/nn.hpp"
#include "somgan/rng.hpp"
#include "somgan/ssgan.hpp"

namespace somgan {

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, RandomStream& rng, double scale = 1.0) {
  Matrix m(r, c);
  for (double& v : m.values()) v = rng.normal(0.0, scale);
  return m;
}

GradCheckResult layer_result(const std::string& name, const nn::GradCheckReport& r) {
  return {name, r.max_error(), kLayerTolerance};
}

GradCheckResult check_layer(const std::string& name, nn::Layer layer, const Matrix& x, nn::Mode mode,
                            RandomStream& rng) {
  nn::Sequential net;
  net.add(std::move(layer));
  return layer_result(name, nn::grad_check(net, x, mode, rng));
}

// Loss of logits checked against its own analytic logits gradient.
GradCheckResult check_loss(const std::string& name, Matrix logits,
                           const std::function<nn::LossGrad(const Matrix&)>& fn) {
  const Matrix analytic = fn(logits).grad;
  const double err = nn::max_relative_error([&] { return fn(logits).value; }, logits, analytic);
  return {name, err, kLayerTolerance};
}

double max_param_error(const std::vector<nn::Parameter*>& params, const std::function<double()>& loss) {
  std::vector<Matrix> analytic;
  for (auto* p : params) analytic.push_back(p->grad);
  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k)
    worst = std::max(worst, nn::max_relative_error(loss, params[k]->value, analytic[k]));
  return worst;
}

GradCheckResult check_sigmoids(RandomStream& rng) {
  const std::size_t n = 12, nodes = 5;
  Matrix d(n, nodes), t(n, nodes);
  for (double& v : d.values()) v = rng.uniform(0.5, 6.0);
  for (double& v : t.values()) v = rng.uniform() < 0.3 ? rng.uniform() : 0.0;
  SigmoidLayer layer;
  for (std::size_t j = 0; j < nodes; ++j) {
    layer.beta.push_back(rng.uniform(1.5, 4.0));
    layer.alpha.push_back(rng.uniform(0.5, 2.0));
  }
  const auto g = sigmoid_gradient(layer, d, t);
  double worst = 0.0;
  const double h = nn::kGradCheckStep;
  for (std::size_t j = 0; j < nodes; ++j) {
    for (int which = 0; which < 2; ++which) {
      double& p = which == 0 ? layer.alpha[j] : layer.beta[j];
      const double saved = p;
      p = saved + h;
      const double plus = sigmoid_objective(layer, d, t);
      p = saved - h;
      const double minus = sigmoid_objective(layer, d, t);
      p = saved;
      const double analytic = which == 0 ? g.alpha[j] : g.beta[j];
      worst = std::max(worst, nn::relative_error(analytic, (plus - minus) / (2.0 * h)));
    }
  }
  return {"membership.sigmoid_objective", worst, kCompositeTolerance};
}

Architecture tiny_architecture() {
  Architecture a;
  a.noise_dim = 3;
  a.generator_hidden = {5, 4};
  a.spectral_path = {5, 4};
  a.som_path = {3, 3};
  return a;
}

GradCheckResult check_discriminator_loss(RandomStream& rng) {
  const std::size_t bands = 4, nodes = 6, classes = 2;
  const auto arch = tiny_architecture();
  Discriminator d(arch, bands, nodes, classes, rng);
  const Matrix lab = random_matrix(6, bands, rng), lab_som = random_matrix(6, nodes, rng, 0.3);
  const Matrix unl = random_matrix(5, bands, rng), unl_som = random_matrix(5, nodes, rng, 0.3);
  const Matrix fake = random_matrix(5, bands, rng), fake_som = random_matrix(5, nodes, rng, 0.3);
  d.init_from_batch(lab, &lab_som);
  DiscriminatorBatch b;
  b.labeled = lab;
  b.labeled_som = &lab_som;
  b.labels = {Label::inlier(0), Label::inlier(1), Label::outlier(), Label::inlier(1), Label::inlier(0),
              Label::outlier()};
  b.unlabeled = &unl;
  b.unlabeled_som = &unl_som;
  b.fake = &fake;
  b.fake_som = &fake_som;
  d.zero_grad();
  discriminator_loss(d, b);
  const double err = max_param_error(d.parameters(), [&] {
    d.zero_grad();
    return discriminator_loss(d, b).total;
  });
  return {"ssgan.discriminator_loss", err, kCompositeTolerance};
}

GradCheckResult check_generator_loss(RandomStream& rng) {
  const std::size_t bands = 4, nodes = 6, classes = 2;
  const auto arch = tiny_architecture();
  Generator g(arch, bands, rng);
  Discriminator d(arch, bands, nodes, classes, rng);
  const Matrix z = nn::sample_uniform_noise(7, arch.noise_dim, rng);
  const Matrix real = random_matrix(6, bands, rng), real_som = random_matrix(6, nodes, rng, 0.3);
  const Matrix fake_som = random_matrix(7, nodes, rng, 0.3);
  g.init_from_batch(z);
  d.init_from_batch(real, &real_som);
  auto som_of = [&](const Matrix&) { return fake_som; };
  g.zero_grad();
  generator_loss(g, d, z, real, &real_som, som_of);
  const double err = max_param_error(g.parameters(), [&] {
    g.zero_grad();
    d.zero_grad();
    return generator_loss(g, d, z, real, &real_som, som_of).fm_loss;
  });
  return {"ssgan.generator_feature_matching", err, kCompositeTolerance};
}

}  // namespace

std::vector<GradCheckResult> run_gradient_suite(std::uint64_t seed) {
  RandomStream rng(seed);
  std::vector<GradCheckResult> out;
  const Matrix x = random_matrix(6, 5, rng);

  out.push_back(check_layer("nn.dense", nn::Dense(5, 4, rng, 0.5), x, nn::Mode::Train, rng));
  {
    nn::WeightNormDense wn(5, 4, rng, 0.5);
    wn.init_from_batch(x);
    out.push_back(check_layer("nn.weight_norm_dense", std::move(wn), x, nn::Mode::Train, rng));
  }
  {
    nn::BatchNorm bn(5);
    for (double& v : bn.scale.value.values()) v = rng.uniform(0.5, 1.5);
    for (double& v : bn.shift.value.values()) v = rng.normal(0.0, 0.5);
    out.push_back(check_layer("nn.batchnorm.train", bn, x, nn::Mode::Train, rng));
    for (double& v : bn.running_mean.values()) v = rng.normal(0.0, 0.5);
    for (double& v : bn.running_var.values()) v = rng.uniform(0.5, 2.0);
    out.push_back(check_layer("nn.batchnorm.eval", bn, x, nn::Mode::Eval, rng));
  }
  out.push_back(check_layer("nn.leaky_relu", nn::LeakyRelu(), x, nn::Mode::Train, rng));

  {
    Generator g(tiny_architecture(), 4, rng);
    const Matrix z = nn::sample_uniform_noise(6, 3, rng);
    g.init_from_batch(z);
    out.push_back(layer_result("ssgan.generator", nn::grad_check(g.net(), z, nn::Mode::Train, rng)));
  }

  const Matrix logits = random_matrix(6, 3, rng, 2.0);
  const std::vector<std::size_t> targets{0, 2, 1, 1, 0, 2};
  out.push_back(check_loss("nn.softmax_cross_entropy", logits,
                           [&](const Matrix& l) { return nn::softmax_cross_entropy(l, targets); }));
  const std::vector<Label> labels{Label::inlier(0), Label::outlier(), Label::inlier(1),
                                  Label::inlier(1), Label::inlier(0), Label::outlier()};
  out.push_back(check_loss("ssgan.loss_supervised", logits,
                           [&](const Matrix& l) { return loss_supervised(l, labels, 2); }));
  out.push_back(check_loss("ssgan.loss_unsupervised_real", logits, loss_unsupervised_real));
  out.push_back(check_loss("ssgan.loss_unsupervised_fake", logits, loss_unsupervised_fake));
  {
    const Matrix f_real = random_matrix(5, 4, rng);
    out.push_back(check_loss("ssgan.loss_generator_fm", random_matrix(6, 4, rng),
                             [&](const Matrix& f) { return loss_generator_fm(f_real, f); }));
  }

  out.push_back(check_sigmoids(rng));
  out.push_back(check_discriminator_loss(rng));
  out.push_back(check_generator_loss(rng));
  return out;
}

}  // namespace somgan
