#pragma once

// Small hand-written reverse-mode building blocks. Every layer caches what
// its backward pass needs from the most recent forward call, so forward and
// backward must be paired.

#include <algorithm>
#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "somgan/matrix.hpp"
#include "somgan/rng.hpp"

namespace somgan::nn {

enum class Mode { Train, Eval };

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter() = default;
  Parameter(std::string n, Matrix v) : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()) {}
  void zero_grad() { grad.fill(0.0); }
};

struct NamedArray {
  std::string name;
  Matrix value;
};

inline constexpr double kInitStd = 0.05;
inline constexpr double kLeakySlope = 0.2;

class Dense {
 public:
  Dense() = default;
  Dense(std::size_t in, std::size_t out, RandomStream& rng, double init_std = kInitStd);

  Matrix forward(const Matrix& x, Mode mode);
  Matrix backward(const Matrix& dy);
  std::vector<Parameter*> parameters() { return {&weight, &bias}; }
  std::vector<Matrix*> buffers() { return {}; }

  std::size_t in_features() const noexcept { return weight.value.rows(); }
  std::size_t out_features() const noexcept { return weight.value.cols(); }

  Parameter weight;  // in x out
  Parameter bias;    // 1 x out

 private:
  Matrix input_;
};

/// Weight-normalised dense layer: column k of the effective weight is
/// g_k * v_k / ||v_k||.
class WeightNormDense {
 public:
  WeightNormDense() = default;
  WeightNormDense(std::size_t in, std::size_t out, RandomStream& rng, double init_std = kInitStd);

  Matrix forward(const Matrix& x, Mode mode);
  Matrix backward(const Matrix& dy);
  std::vector<Parameter*> parameters() { return {&direction, &gain, &bias}; }
  std::vector<Matrix*> buffers() { return {}; }

  /// Data-dependent init: sets gain and bias so this batch's
  /// pre-activations have zero mean and unit variance per output.
  void init_from_batch(const Matrix& x);
  Matrix effective_weight() const;

  std::size_t in_features() const noexcept { return direction.value.rows(); }
  std::size_t out_features() const noexcept { return direction.value.cols(); }

  Parameter direction;  // V, in x out
  Parameter gain;       // 1 x out
  Parameter bias;       // 1 x out

 private:
  std::vector<double> column_norms() const;
  Matrix input_;
  Matrix weight_;
  std::vector<double> norms_;
};

class BatchNorm {
 public:
  BatchNorm() = default;
  explicit BatchNorm(std::size_t features, double momentum = 0.1, double eps = 1e-8);

  /// Train mode normalises with batch statistics and updates running
  /// statistics; eval mode is a fixed affine map.
  Matrix forward(const Matrix& x, Mode mode);
  Matrix backward(const Matrix& dy);
  std::vector<Parameter*> parameters() { return {&scale, &shift}; }
  std::vector<Matrix*> buffers() { return {&running_mean, &running_var}; }

  std::size_t features() const noexcept { return scale.value.cols(); }

  Parameter scale;  // gamma
  Parameter shift;  // delta
  Matrix running_mean;
  Matrix running_var;
  double momentum = 0.1;
  double eps = 1e-8;

 private:
  Mode last_mode_ = Mode::Train;
  Matrix normalized_;
  std::vector<double> inv_std_;
};

class LeakyRelu {
 public:
  explicit LeakyRelu(double slope = kLeakySlope) : slope_(slope) {}

  Matrix forward(const Matrix& x, Mode mode);
  Matrix backward(const Matrix& dy);
  std::vector<Parameter*> parameters() { return {}; }
  std::vector<Matrix*> buffers() { return {}; }
  double slope() const noexcept { return slope_; }

 private:
  double slope_;
  Matrix input_;
};

using Layer = std::variant<Dense, WeightNormDense, BatchNorm, LeakyRelu>;

class Sequential {
 public:
  Sequential() = default;

  void add(Layer layer) { layers_.push_back(std::move(layer)); }
  Matrix forward(const Matrix& x, Mode mode);
  Matrix backward(const Matrix& dy);

  std::vector<Parameter*> parameters();
  void zero_grad();

  /// Runs the forward pass layer by layer and applies the data-dependent
  /// init to each weight-normalised layer on the way.
  Matrix init_from_batch(const Matrix& x);

  /// Parameters and buffers as `<prefix><index>.<name>`.
  std::vector<NamedArray> export_state(const std::string& prefix) const;
  /// Throws Error(Parse) on a missing array or a shape mismatch.
  void import_state(const std::string& prefix, const std::map<std::string, Matrix>& arrays);

  std::size_t size() const noexcept { return layers_.size(); }
  Layer& operator[](std::size_t i) { return layers_[i]; }
  const Layer& operator[](std::size_t i) const { return layers_[i]; }

 private:
  std::vector<Layer> layers_;
};

struct LossGrad {
  double value = 0.0;
  Matrix grad;
};

double log_sum_exp(std::span<const double> v);
Matrix softmax(const Matrix& logits);

/// Mean over rows of -log softmax(logits)[target].
LossGrad softmax_cross_entropy(const Matrix& logits, std::span<const std::size_t> targets);
/// Mean over rows of -sum_c q_c log softmax(logits)_c for target distributions q.
LossGrad softmax_cross_entropy(const Matrix& logits, const Matrix& target_distributions);

/// i.i.d. Uniform[0, 1).
Matrix sample_uniform_noise(std::size_t n, std::size_t dim, RandomStream& rng);

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam() = default;
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  /// Bias-corrected update. Throws Error(Divergence) on a non-finite grad.
  void step(const std::vector<Parameter*>& params);
  long steps() const noexcept { return t_; }
  const AdamConfig& config() const noexcept { return cfg_; }

 private:
  AdamConfig cfg_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  long t_ = 0;
};

// ---------------------------------------------------------------------------
// Gradient checking

inline constexpr double kGradCheckStep = 1e-5;
/// Magnitude floor in the relative-error denominator; below it the error is
/// effectively absolute.
inline constexpr double kGradCheckFloor = 1e-5;

double relative_error(double analytic, double numeric) noexcept;

/// Perturbs every entry of `x` by +-h, evaluates `loss`, and returns the
/// largest relative error against `analytic` (same shape as x).
double max_relative_error(const std::function<double()>& loss, Matrix& x, const Matrix& analytic,
                          double h = kGradCheckStep);

struct GradCheckReport {
  double max_param_error = 0.0;
  double max_input_error = 0.0;
  double max_error() const noexcept { return std::max(max_param_error, max_input_error); }
};

/// Checks input and parameter gradients of `net` under the scalar loss
/// sum(R .* net(x)) for a fixed random R.
GradCheckReport grad_check(Sequential& net, const Matrix& input, Mode mode, RandomStream& rng,
                           double h = kGradCheckStep);

}  // namespace somgan::nn
