#include "somgan/nn.hpp"

#include <cmath>

#include "somgan/error.hpp"

namespace somgan::nn {

namespace {

Matrix gaussian(std::size_t rows, std::size_t cols, double stddev, RandomStream& rng) {
  Matrix m(rows, cols);
  for (double& v : m.values()) v = rng.normal(0.0, stddev);
  return m;
}

void add_row_vector(Matrix& y, const Matrix& row) {
  for (std::size_t i = 0; i < y.rows(); ++i) {
    auto r = y.row(i);
    for (std::size_t j = 0; j < y.cols(); ++j) r[j] += row(0, j);
  }
}

void accumulate_column_sums(const Matrix& dy, Matrix& out) {
  for (std::size_t i = 0; i < dy.rows(); ++i)
    for (std::size_t j = 0; j < dy.cols(); ++j) out(0, j) += dy(i, j);
}

void add_into(Matrix& acc, const Matrix& delta) {
  for (std::size_t k = 0; k < acc.size(); ++k) acc.values()[k] += delta.values()[k];
}

}  // namespace

// ---------------------------------------------------------------------------
// Dense

Dense::Dense(std::size_t in, std::size_t out, RandomStream& rng, double init_std)
    : weight("W", gaussian(in, out, init_std, rng)), bias("b", Matrix(1, out)) {}

Matrix Dense::forward(const Matrix& x, Mode) {
  require_dims(x.cols() == in_features(), "dense: input width " + std::to_string(x.cols()) +
                                              " != " + std::to_string(in_features()));
  input_ = x;
  Matrix y = matmul(x, weight.value);
  add_row_vector(y, bias.value);
  return y;
}

Matrix Dense::backward(const Matrix& dy) {
  require_dims(dy.rows() == input_.rows() && dy.cols() == out_features(),
               "dense: gradient shape does not match last forward");
  add_into(weight.grad, matmul_tn(input_, dy));
  accumulate_column_sums(dy, bias.grad);
  return matmul_nt(dy, weight.value);
}

// ---------------------------------------------------------------------------
// WeightNormDense

WeightNormDense::WeightNormDense(std::size_t in, std::size_t out, RandomStream& rng, double init_std)
    : direction("V", gaussian(in, out, init_std, rng)),
      gain("g", Matrix(1, out, 1.0)),
      bias("b", Matrix(1, out)) {}

std::vector<double> WeightNormDense::column_norms() const {
  const Matrix& v = direction.value;
  std::vector<double> norms(v.cols(), 0.0);
  for (std::size_t i = 0; i < v.rows(); ++i)
    for (std::size_t k = 0; k < v.cols(); ++k) norms[k] += v(i, k) * v(i, k);
  for (double& n : norms) {
    n = std::sqrt(n);
    if (!(n > 0.0)) fail(ErrorKind::Numerical, "weight norm: zero direction column");
  }
  return norms;
}

Matrix WeightNormDense::effective_weight() const {
  const auto norms = column_norms();
  Matrix w = direction.value;
  for (std::size_t i = 0; i < w.rows(); ++i)
    for (std::size_t k = 0; k < w.cols(); ++k) w(i, k) *= gain.value(0, k) / norms[k];
  return w;
}

Matrix WeightNormDense::forward(const Matrix& x, Mode) {
  require_dims(x.cols() == in_features(), "wn_dense: input width " + std::to_string(x.cols()) +
                                              " != " + std::to_string(in_features()));
  input_ = x;
  norms_ = column_norms();
  weight_ = effective_weight();
  Matrix y = matmul(x, weight_);
  add_row_vector(y, bias.value);
  return y;
}

Matrix WeightNormDense::backward(const Matrix& dy) {
  require_dims(dy.rows() == input_.rows() && dy.cols() == out_features(),
               "wn_dense: gradient shape does not match last forward");
  const Matrix dw = matmul_tn(input_, dy);
  const Matrix& v = direction.value;
  std::vector<double> dg(v.cols(), 0.0);
  for (std::size_t i = 0; i < v.rows(); ++i)
    for (std::size_t k = 0; k < v.cols(); ++k) dg[k] += dw(i, k) * v(i, k);
  for (std::size_t k = 0; k < v.cols(); ++k) {
    dg[k] /= norms_[k];
    gain.grad(0, k) += dg[k];
  }
  for (std::size_t i = 0; i < v.rows(); ++i)
    for (std::size_t k = 0; k < v.cols(); ++k) {
      const double scale = gain.value(0, k) / norms_[k];
      direction.grad(i, k) += scale * (dw(i, k) - dg[k] * v(i, k) / norms_[k]);
    }
  accumulate_column_sums(dy, bias.grad);
  return matmul_nt(dy, weight_);
}

void WeightNormDense::init_from_batch(const Matrix& x) {
  require_dims(x.cols() == in_features(), "wn_dense init: input width mismatch");
  if (x.rows() == 0) return;
  gain.value.fill(1.0);
  bias.value.fill(0.0);
  const Matrix t = matmul(x, effective_weight());
  const double n = static_cast<double>(t.rows());
  for (std::size_t k = 0; k < t.cols(); ++k) {
    double mean = 0.0;
    for (std::size_t i = 0; i < t.rows(); ++i) mean += t(i, k);
    mean /= n;
    double var = 0.0;
    for (std::size_t i = 0; i < t.rows(); ++i) var += (t(i, k) - mean) * (t(i, k) - mean);
    const double s = std::sqrt(var / n);
    const double inv = s > 1e-8 ? 1.0 / s : 1.0;
    gain.value(0, k) = inv;
    bias.value(0, k) = -mean * inv;
  }
}

// ---------------------------------------------------------------------------
// BatchNorm

BatchNorm::BatchNorm(std::size_t features, double momentum_, double eps_)
    : scale("gamma", Matrix(1, features, 1.0)),
      shift("delta", Matrix(1, features)),
      running_mean(1, features),
      running_var(1, features, 1.0),
      momentum(momentum_),
      eps(eps_) {
  if (!(eps > 0.0)) fail(ErrorKind::Config, "batchnorm eps must be positive");
}

Matrix BatchNorm::forward(const Matrix& x, Mode mode) {
  require_dims(x.cols() == features(), "batchnorm: feature count mismatch");
  last_mode_ = mode;
  const std::size_t n = x.rows();
  const std::size_t f = x.cols();
  std::vector<double> mean(f, 0.0);
  std::vector<double> var(f, 0.0);
  if (mode == Mode::Train) {
    if (n == 0) fail(ErrorKind::Precondition, "batchnorm: empty training batch");
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < f; ++j) mean[j] += x(i, j);
    for (double& m : mean) m /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < f; ++j) var[j] += (x(i, j) - mean[j]) * (x(i, j) - mean[j]);
    for (double& v : var) v /= static_cast<double>(n);
    for (std::size_t j = 0; j < f; ++j) {
      running_mean(0, j) = (1.0 - momentum) * running_mean(0, j) + momentum * mean[j];
      running_var(0, j) = (1.0 - momentum) * running_var(0, j) + momentum * var[j];
    }
  } else {
    for (std::size_t j = 0; j < f; ++j) {
      mean[j] = running_mean(0, j);
      var[j] = running_var(0, j);
    }
  }
  inv_std_.assign(f, 0.0);
  for (std::size_t j = 0; j < f; ++j) inv_std_[j] = 1.0 / std::sqrt(var[j] + eps);
  normalized_ = Matrix(n, f);
  Matrix y(n, f);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < f; ++j) {
      const double xh = (x(i, j) - mean[j]) * inv_std_[j];
      normalized_(i, j) = xh;
      y(i, j) = scale.value(0, j) * xh + shift.value(0, j);
    }
  return y;
}

Matrix BatchNorm::backward(const Matrix& dy) {
  require_dims(dy.same_shape(normalized_), "batchnorm: gradient shape does not match last forward");
  const std::size_t n = dy.rows();
  const std::size_t f = dy.cols();
  Matrix dx(n, f);
  for (std::size_t j = 0; j < f; ++j) {
    double sum_dy = 0.0;
    double sum_dy_xh = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      sum_dy += dy(i, j);
      sum_dy_xh += dy(i, j) * normalized_(i, j);
    }
    scale.grad(0, j) += sum_dy_xh;
    shift.grad(0, j) += sum_dy;
    const double g = scale.value(0, j);
    if (last_mode_ == Mode::Eval) {
      for (std::size_t i = 0; i < n; ++i) dx(i, j) = dy(i, j) * g * inv_std_[j];
      continue;
    }
    // d xhat = dy * gamma; dx = inv_std / n * (n dxh - sum dxh - xh sum(dxh xh))
    const double nn = static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      dx(i, j) = g * inv_std_[j] / nn *
                 (nn * dy(i, j) - sum_dy - normalized_(i, j) * sum_dy_xh);
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// LeakyRelu

Matrix LeakyRelu::forward(const Matrix& x, Mode) {
  input_ = x;
  Matrix y = x;
  for (double& v : y.values())
    if (v < 0.0) v *= slope_;
  return y;
}

Matrix LeakyRelu::backward(const Matrix& dy) {
  require_dims(dy.same_shape(input_), "leaky_relu: gradient shape does not match last forward");
  Matrix dx = dy;
  for (std::size_t k = 0; k < dx.size(); ++k)
    if (input_.values()[k] < 0.0) dx.values()[k] *= slope_;
  return dx;
}

// ---------------------------------------------------------------------------
// Sequential

Matrix Sequential::forward(const Matrix& x, Mode mode) {
  Matrix h = x;
  for (auto& layer : layers_) h = std::visit([&](auto& l) { return l.forward(h, mode); }, layer);
  return h;
}

Matrix Sequential::backward(const Matrix& dy) {
  Matrix g = dy;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it)
    g = std::visit([&](auto& l) { return l.backward(g); }, *it);
  return g;
}

std::vector<Parameter*> Sequential::parameters() {
  std::vector<Parameter*> out;
  for (auto& layer : layers_) {
    auto ps = std::visit([](auto& l) { return l.parameters(); }, layer);
    out.insert(out.end(), ps.begin(), ps.end());
  }
  return out;
}

void Sequential::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

Matrix Sequential::init_from_batch(const Matrix& x) {
  Matrix h = x;
  for (auto& layer : layers_) {
    if (auto* wn = std::get_if<WeightNormDense>(&layer)) wn->init_from_batch(h);
    h = std::visit([&](auto& l) { return l.forward(h, Mode::Train); }, layer);
  }
  return h;
}

std::vector<NamedArray> Sequential::export_state(const std::string& prefix) const {
  std::vector<NamedArray> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    auto& layer = const_cast<Layer&>(layers_[i]);
    const std::string base = prefix + std::to_string(i) + ".";
    for (auto* p : std::visit([](auto& l) { return l.parameters(); }, layer))
      out.push_back({base + p->name, p->value});
    if (auto* bn = std::get_if<BatchNorm>(&layer)) {
      out.push_back({base + "running_mean", bn->running_mean});
      out.push_back({base + "running_var", bn->running_var});
    }
  }
  return out;
}

void Sequential::import_state(const std::string& prefix, const std::map<std::string, Matrix>& arrays) {
  auto assign = [&](const std::string& name, Matrix& target) {
    const auto it = arrays.find(name);
    if (it == arrays.end()) fail(ErrorKind::Parse, "checkpoint is missing array " + name);
    if (!it->second.same_shape(target))
      fail(ErrorKind::Parse, "checkpoint array " + name + " has the wrong shape");
    target = it->second;
  };
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const std::string base = prefix + std::to_string(i) + ".";
    for (auto* p : std::visit([](auto& l) { return l.parameters(); }, layers_[i]))
      assign(base + p->name, p->value);
    if (auto* bn = std::get_if<BatchNorm>(&layers_[i])) {
      assign(base + "running_mean", bn->running_mean);
      assign(base + "running_var", bn->running_var);
    }
  }
}

// ---------------------------------------------------------------------------
// Losses, noise

double log_sum_exp(std::span<const double> v) {
  double m = v[0];
  for (double x : v) m = std::max(m, x);
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

Matrix softmax(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const double lse = log_sum_exp(logits.row(i));
    for (std::size_t c = 0; c < logits.cols(); ++c) p(i, c) = std::exp(logits(i, c) - lse);
  }
  return p;
}

LossGrad softmax_cross_entropy(const Matrix& logits, std::span<const std::size_t> targets) {
  require_dims(targets.size() == logits.rows(), "cross entropy: one target per row required");
  Matrix q(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    require_dims(targets[i] < logits.cols(), "cross entropy: target class out of range");
    q(i, targets[i]) = 1.0;
  }
  return softmax_cross_entropy(logits, q);
}

LossGrad softmax_cross_entropy(const Matrix& logits, const Matrix& target_distributions) {
  require_dims(logits.same_shape(target_distributions), "cross entropy: target shape mismatch");
  LossGrad out{0.0, Matrix(logits.rows(), logits.cols())};
  if (logits.rows() == 0) return out;
  const double inv_n = 1.0 / static_cast<double>(logits.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const double lse = log_sum_exp(logits.row(i));
    double qsum = 0.0;
    for (std::size_t c = 0; c < logits.cols(); ++c) {
      const double q = target_distributions(i, c);
      qsum += q;
      if (q != 0.0) out.value -= q * (logits(i, c) - lse);
    }
    for (std::size_t c = 0; c < logits.cols(); ++c)
      out.grad(i, c) = (qsum * std::exp(logits(i, c) - lse) - target_distributions(i, c)) * inv_n;
  }
  out.value *= inv_n;
  return out;
}

Matrix sample_uniform_noise(std::size_t n, std::size_t dim, RandomStream& rng) {
  if (dim == 0) fail(ErrorKind::Precondition, "noise dimension must be positive");
  Matrix z(n, dim);
  for (double& v : z.values()) v = rng.uniform();
  return z;
}

// ---------------------------------------------------------------------------
// Adam

void Adam::step(const std::vector<Parameter*>& params) {
  if (m_.size() != params.size()) {
    m_.clear();
    v_.clear();
    for (auto* p : params) {
      m_.emplace_back(p->value.rows(), p->value.cols());
      v_.emplace_back(p->value.rows(), p->value.cols());
    }
    t_ = 0;
  }
  for (auto* p : params)
    for (double g : p->grad.values())
      if (!std::isfinite(g)) fail(ErrorKind::Divergence, "non-finite gradient in " + p->name);
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& value = params[k]->value.values();
    const auto& grad = params[k]->grad.values();
    auto& m = m_[k].values();
    auto& v = v_[k].values();
    for (std::size_t i = 0; i < value.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * grad[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      value[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

// ---------------------------------------------------------------------------
// Gradient checking

double relative_error(double analytic, double numeric) noexcept {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), kGradCheckFloor});
  return std::abs(analytic - numeric) / denom;
}

double max_relative_error(const std::function<double()>& loss, Matrix& x, const Matrix& analytic,
                          double h) {
  require_dims(x.same_shape(analytic), "grad check: analytic gradient shape mismatch");
  double worst = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double saved = x.values()[k];
    x.values()[k] = saved + h;
    const double plus = loss();
    x.values()[k] = saved - h;
    const double minus = loss();
    x.values()[k] = saved;
    worst = std::max(worst, relative_error(analytic.values()[k], (plus - minus) / (2.0 * h)));
  }
  return worst;
}

GradCheckReport grad_check(Sequential& net, const Matrix& input, Mode mode, RandomStream& rng,
                           double h) {
  Matrix x = input;
  Matrix y = net.forward(x, mode);
  Matrix r(y.rows(), y.cols());
  for (double& v : r.values()) v = rng.normal(0.0, 1.0);

  net.zero_grad();
  net.forward(x, mode);
  const Matrix dx = net.backward(r);

  std::vector<Matrix> param_grads;
  for (auto* p : net.parameters()) param_grads.push_back(p->grad);

  auto loss = [&]() {
    const Matrix out = net.forward(x, mode);
    double s = 0.0;
    for (std::size_t k = 0; k < out.size(); ++k) s += out.values()[k] * r.values()[k];
    return s;
  };

  GradCheckReport report;
  report.max_input_error = max_relative_error(loss, x, dx, h);
  const auto params = net.parameters();
  for (std::size_t k = 0; k < params.size(); ++k)
    report.max_param_error =
        std::max(report.max_param_error, max_relative_error(loss, params[k]->value, param_grads[k], h));
  return report;
}

}  // namespace somgan::nn
