#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "somgan/matrix.hpp"
#include "somgan/simd.hpp"

using namespace somgan;

namespace {

struct BackendGuard {
  simd::Backend saved = simd::active_backend();
  ~BackendGuard() { simd::set_backend(saved); }
};

double rel(double a, double b) { return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)}); }

}  // namespace

TEST_SUITE("simd") {

TEST_CASE("scalar backend is always available") {
  CHECK(simd::backend_available(simd::Backend::Scalar));
  CHECK(simd::available_backends().front() == simd::Backend::Scalar);
}

TEST_CASE("every variant matches the scalar reference") {
  RandomStream rng(11);
  const auto& ref = simd::scalar_kernels();
  for (auto b : simd::available_backends()) {
    CAPTURE(simd::backend_name(b));
    BackendGuard guard;
    simd::set_backend(b);
    const auto& k = simd::kernels();
    for (std::size_t n = 0; n < 70; ++n) {
      const auto x = testutil::random_vector(n, rng);
      const auto y = testutil::random_vector(n, rng);
      CHECK(rel(k.dot(x.data(), y.data(), n), ref.dot(x.data(), y.data(), n)) < 1e-13);
      CHECK(rel(k.squared_distance(x.data(), y.data(), n), ref.squared_distance(x.data(), y.data(), n)) < 1e-13);
      auto y1 = y, y2 = y;
      k.axpy(0.37, x.data(), y1.data(), n);
      ref.axpy(0.37, x.data(), y2.data(), n);
      for (std::size_t i = 0; i < n; ++i) CHECK(rel(y1[i], y2[i]) < 1e-15);
    }
    for (std::size_t trial = 0; trial < 30; ++trial) {
      const std::size_t n = 1 + rng.index(9), kk = 1 + rng.index(40), m = 1 + rng.index(37);
      const Matrix a = testutil::random_matrix(n, kk, rng), bm = testutil::random_matrix(kk, m, rng);
      Matrix c1 = testutil::random_matrix(n, m, rng), c2 = c1;
      k.gemm_acc(n, kk, m, a.data(), bm.data(), c1.data());
      ref.gemm_acc(n, kk, m, a.data(), bm.data(), c2.data());
      CHECK(testutil::max_abs_diff(c1, c2) < 1e-12);
    }
  }
}

TEST_CASE("matmul agrees with a triple-loop oracle under each backend") {
  RandomStream rng(12);
  const Matrix a = testutil::random_matrix(7, 13, rng), b = testutil::random_matrix(13, 9, rng);
  Matrix oracle(7, 9);
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t j = 0; j < 9; ++j)
      for (std::size_t k = 0; k < 13; ++k) oracle(i, j) += a(i, k) * b(k, j);
  for (auto backend : simd::available_backends()) {
    BackendGuard guard;
    simd::set_backend(backend);
    CHECK(testutil::max_abs_diff(matmul(a, b), oracle) < 1e-12);
    CHECK(testutil::max_abs_diff(matmul_nt(a, b.transposed()), oracle) < 1e-12);
    CHECK(testutil::max_abs_diff(matmul_tn(a.transposed(), b), oracle) < 1e-12);
  }
}

TEST_CASE("matmul rows do not depend on batch size") {
  RandomStream rng(13);
  const Matrix a = testutil::random_matrix(33, 20, rng), b = testutil::random_matrix(20, 17, rng);
  const Matrix full = matmul(a, b);
  for (std::size_t r = 0; r < a.rows(); r += 5) {
    const Matrix one = matmul(a.slice_rows(r, 1), b);
    for (std::size_t c = 0; c < b.cols(); ++c) CHECK(one(0, c) == full(r, c));
  }
}

TEST_CASE("unavailable backend is a config error") {
  if (!simd::backend_available(simd::Backend::Avx2)) CHECK_THROWS(simd::set_backend(simd::Backend::Avx2));
}

}
