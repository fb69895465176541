#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "helpers.hpp"
#include "somgan/checkpoint.hpp"
#include "somgan/error.hpp"
#include "somgan/nn.hpp"

using namespace somgan;
using namespace somgan::nn;

namespace {

// Independent central-difference oracle for a scalar function of a matrix.
template <class F>
Matrix numeric_grad(F&& f, Matrix& x, double h = 1e-5) {
  Matrix g(x.rows(), x.cols());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double s = x.values()[k];
    x.values()[k] = s + h;
    const double p = f();
    x.values()[k] = s - h;
    const double m = f();
    x.values()[k] = s;
    g.values()[k] = (p - m) / (2 * h);
  }
  return g;
}

double max_rel(const Matrix& a, const Matrix& b) {
  double w = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double x = a.values()[k], y = b.values()[k];
    w = std::max(w, std::abs(x - y) / std::max({std::abs(x), std::abs(y), 1e-5}));
  }
  return w;
}

// Keeps entries at least `margin` away from the leaky ReLU kink.
Matrix away_from_zero(Matrix m, double margin) {
  for (double& v : m.values())
    if (std::abs(v) < margin) v = v < 0 ? -margin : margin;
  return m;
}

}  // namespace

TEST_SUITE("nn") {

TEST_CASE("grad check on randomized shapes") {
  RandomStream rng(1);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 2 + rng.index(6), in = 1 + rng.index(7), out = 1 + rng.index(7);
    const Matrix x = testutil::random_matrix(n, in, rng);
    {
      Sequential s;
      s.add(Dense(in, out, rng, 0.5));
      CHECK(grad_check(s, x, Mode::Train, rng).max_error() < 1e-4);
    }
    {
      Sequential s;
      WeightNormDense wn(in, out, rng, 0.5);
      wn.init_from_batch(x);
      s.add(wn);
      CHECK(grad_check(s, x, Mode::Train, rng).max_error() < 1e-4);
    }
    {
      Sequential s;
      s.add(BatchNorm(in));
      CHECK(grad_check(s, x, Mode::Train, rng).max_error() < 1e-4);
      CHECK(grad_check(s, x, Mode::Eval, rng).max_error() < 1e-4);
    }
    {
      Sequential s;
      s.add(LeakyRelu());
      CHECK(grad_check(s, away_from_zero(x, 1e-3), Mode::Train, rng).max_error() < 1e-4);
    }
  }
}

TEST_CASE("two-layer composite with leaky relu") {
  RandomStream rng(2);
  Sequential s;
  s.add(Dense(4, 6, rng, 0.5));
  s.add(LeakyRelu());
  s.add(WeightNormDense(6, 3, rng, 0.5));
  Matrix x = testutil::random_matrix(5, 4, rng);
  // Nudge inputs until no hidden pre-activation sits within h of the kink.
  for (int k = 0; k < 100; ++k) {
    auto& d = std::get<Dense>(s[0]);
    const Matrix pre = d.forward(x, Mode::Train);
    bool ok = true;
    for (double v : pre.values()) ok &= std::abs(v) > 1e-3;
    if (ok) break;
    x = testutil::random_matrix(5, 4, rng);
  }
  CHECK(grad_check(s, x, Mode::Train, rng).max_error() < 1e-4);
}

TEST_CASE("layer gradients against an independent difference oracle") {
  RandomStream rng(3);
  Dense d(3, 2, rng, 0.5);
  Matrix x = testutil::random_matrix(4, 3, rng);
  const Matrix r = testutil::random_matrix(4, 2, rng);
  auto loss = [&] {
    const Matrix y = d.forward(x, Mode::Train);
    double s = 0;
    for (std::size_t k = 0; k < y.size(); ++k) s += y.values()[k] * r.values()[k];
    return s;
  };
  d.forward(x, Mode::Train);
  d.weight.zero_grad();
  d.bias.zero_grad();
  const Matrix dx = d.backward(r);
  CHECK(max_rel(dx, numeric_grad(loss, x)) < 1e-6);
  const Matrix dw = d.weight.grad;
  CHECK(max_rel(dw, numeric_grad(loss, d.weight.value)) < 1e-6);
}

TEST_CASE("weight norm with gain equal to the direction norm is a dense layer") {
  RandomStream rng(4);
  WeightNormDense wn(5, 3, rng, 0.3);
  for (std::size_t k = 0; k < 3; ++k) {
    double n = 0.0;
    for (std::size_t i = 0; i < 5; ++i) n += wn.direction.value(i, k) * wn.direction.value(i, k);
    wn.gain.value(0, k) = std::sqrt(n);
  }
  for (double& b : wn.bias.value.values()) b = rng.normal(0.0, 1.0);
  Dense d(5, 3, rng);
  d.weight.value = wn.direction.value;
  d.bias.value = wn.bias.value;
  const Matrix x = testutil::random_matrix(7, 5, rng);
  CHECK(testutil::max_abs_diff(wn.forward(x, Mode::Eval), d.forward(x, Mode::Eval)) < 1e-12);
}

TEST_CASE("weight norm direction gradient is orthogonal to the direction") {
  RandomStream rng(5);
  WeightNormDense wn(6, 4, rng, 0.3);
  const Matrix x = testutil::random_matrix(8, 6, rng);
  wn.forward(x, Mode::Train);
  wn.direction.zero_grad();
  wn.backward(testutil::random_matrix(8, 4, rng));
  for (std::size_t k = 0; k < 4; ++k) {
    double dot = 0.0, n = 0.0;
    for (std::size_t i = 0; i < 6; ++i) {
      dot += wn.direction.grad(i, k) * wn.direction.value(i, k);
      n += wn.direction.value(i, k) * wn.direction.value(i, k);
    }
    CHECK(std::abs(dot) < 1e-12 * std::max(1.0, n));
  }
}

TEST_CASE("data-dependent init normalises the batch") {
  RandomStream rng(6);
  WeightNormDense wn(4, 3, rng);
  const Matrix x = testutil::random_matrix(50, 4, rng, 3.0);
  wn.init_from_batch(x);
  const Matrix y = wn.forward(x, Mode::Eval);
  for (std::size_t c = 0; c < 3; ++c) {
    double m = 0, v = 0;
    for (std::size_t i = 0; i < 50; ++i) m += y(i, c);
    m /= 50;
    for (std::size_t i = 0; i < 50; ++i) v += (y(i, c) - m) * (y(i, c) - m);
    CHECK(std::abs(m) < 1e-10);
    CHECK(std::abs(v / 50 - 1.0) < 1e-8);
  }
}

TEST_CASE("leaky relu values") {
  LeakyRelu l;
  Matrix x(1, 2);
  x(0, 0) = -1.0, x(0, 1) = 1.0;
  const Matrix y = l.forward(x, Mode::Train);
  CHECK(y(0, 0) == -0.2);
  CHECK(y(0, 1) == 1.0);
}

TEST_CASE("batchnorm normalises in train mode and is affine in eval mode") {
  RandomStream rng(7);
  BatchNorm bn(3);
  const Matrix x = testutil::random_matrix(40, 3, rng, 4.0);
  const Matrix y = bn.forward(x, Mode::Train);  // gamma 1, delta 0
  for (std::size_t c = 0; c < 3; ++c) {
    double m = 0, v = 0;
    for (std::size_t i = 0; i < 40; ++i) m += y(i, c);
    m /= 40;
    for (std::size_t i = 0; i < 40; ++i) v += (y(i, c) - m) * (y(i, c) - m);
    CHECK(std::abs(m) < 1e-8);
    CHECK(std::abs(v / 40 - 1.0) < 1e-6);
  }
  const Matrix a = bn.forward(x, Mode::Eval), b = bn.forward(x, Mode::Eval);
  CHECK(a == b);
  const Matrix one = bn.forward(x.slice_rows(3, 1), Mode::Eval);
  for (std::size_t c = 0; c < 3; ++c) CHECK(one(0, c) == a(3, c));
  for (double v : bn.running_var.values()) CHECK(v >= 0.0);
}

TEST_CASE("softmax cross entropy examples") {
  Matrix u(2, 4);
  const auto l = softmax_cross_entropy(u, std::vector<std::size_t>{1, 3});
  CHECK(l.value == doctest::Approx(std::log(4.0)).epsilon(1e-14));
  Matrix big(1, 3);
  big(0, 2) = 60.0;
  CHECK(softmax_cross_entropy(big, std::vector<std::size_t>{2}).value < 1e-20);
  Matrix huge(1, 2);
  huge(0, 0) = 1e4;
  CHECK(std::isfinite(softmax_cross_entropy(huge, std::vector<std::size_t>{1}).value));

  RandomStream rng(8);
  Matrix logits = testutil::random_matrix(5, 3, rng, 2.0);
  const std::vector<std::size_t> t{0, 1, 2, 2, 1};
  const auto r = softmax_cross_entropy(logits, t);
  CHECK(max_rel(r.grad, numeric_grad([&] { return softmax_cross_entropy(logits, t).value; }, logits)) < 1e-4);

  Matrix q(5, 3);
  for (std::size_t i = 0; i < 5; ++i) q(i, t[i]) = 1.0;
  const auto rq = softmax_cross_entropy(logits, q);
  CHECK(rq.value == doctest::Approx(r.value).epsilon(1e-14));
}

TEST_CASE("uniform noise") {
  RandomStream a(9), b(9);
  const Matrix x = sample_uniform_noise(1000, 100, a);
  CHECK(x == sample_uniform_noise(1000, 100, b));
  double s = 0;
  for (double v : x.values()) {
    CHECK(v >= 0.0);
    CHECK(v < 1.0);
    s += v;
  }
  CHECK(std::abs(s / x.size() - 0.5) < 0.01);
}

TEST_CASE("adam identities") {
  Parameter p("p", Matrix(1, 3, 1.0));
  Adam zero(AdamConfig{});
  zero.step({&p});
  CHECK(p.value == Matrix(1, 3, 1.0));

  Parameter q("q", Matrix(1, 2, 0.0));
  q.grad(0, 0) = 3.0;
  q.grad(0, 1) = -0.01;
  Adam one(AdamConfig{});
  one.step({&q});
  CHECK(q.value(0, 0) == doctest::Approx(-2e-4).epsilon(1e-6));
  CHECK(q.value(0, 1) == doctest::Approx(2e-4).epsilon(1e-4));

  Parameter bad("b", Matrix(1, 1));
  bad.grad(0, 0) = NAN;
  try {
    one.step({&bad});
    FAIL("expected divergence");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Divergence);
  }
}

TEST_CASE("adam minimises a quadratic bowl") {
  Parameter x("x", Matrix(1, 3));
  x.value(0, 0) = 1.0, x.value(0, 1) = -2.0, x.value(0, 2) = 0.5;
  AdamConfig cfg;
  cfg.lr = 0.05;
  Adam adam(cfg);
  for (int s = 0; s < 500; ++s) {
    for (std::size_t k = 0; k < 3; ++k) x.grad(0, k) = 2.0 * x.value(0, k);
    adam.step({&x});
  }
  for (double v : x.value.values()) CHECK(std::abs(v) < 1e-3);
}

TEST_CASE("checkpoint text round trip is bit exact") {
  RandomStream rng(10);
  Sequential s;
  s.add(Dense(3, 4, rng));
  s.add(BatchNorm(4));
  s.add(LeakyRelu());
  s.add(WeightNormDense(4, 2, rng));
  s.forward(testutil::random_matrix(6, 3, rng), Mode::Train);
  const auto arrays = s.export_state("net.");
  const auto path = std::filesystem::temp_directory_path() / "somgan_ckpt.txt";
  save_arrays(arrays, path);
  const auto back = load_arrays(path);
  REQUIRE(back.size() == arrays.size());
  for (std::size_t i = 0; i < arrays.size(); ++i) {
    CHECK(back[i].name == arrays[i].name);
    CHECK(back[i].value == arrays[i].value);
  }
  Sequential t;
  RandomStream other(99);
  t.add(Dense(3, 4, other));
  t.add(BatchNorm(4));
  t.add(LeakyRelu());
  t.add(WeightNormDense(4, 2, other));
  t.import_state("net.", to_map(back));
  const Matrix x = testutil::random_matrix(5, 3, rng);
  CHECK(s.forward(x, Mode::Eval) == t.forward(x, Mode::Eval));
  CHECK_THROWS_AS(parse_arrays("not-a-checkpoint\n"), Error);
  std::filesystem::remove(path);
}

TEST_CASE("shape mismatch is a dimension error") {
  RandomStream rng(11);
  Dense d(3, 2, rng);
  try {
    d.forward(Matrix(2, 4), Mode::Train);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Dimension);
  }
}

}
