#pragma once

// Runtime-dispatched numeric kernels. Every kernel has a scalar reference
// implementation; wider variants are selected once at startup based on
// CPU support and can be overridden with SOMGAN_SIMD=scalar|avx2 or
// set_backend() (tests use the latter to compare variants).

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace somgan::simd {

enum class Backend { Scalar, Avx2 };

struct KernelTable {
  const char* name;
  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*squared_distance)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // C(n x m) += A(n x k) * B(k x m); all row-major and contiguous.
  void (*gemm_acc)(std::size_t n, std::size_t k, std::size_t m, const double* a,
                   const double* b, double* c);
};

const KernelTable& scalar_kernels() noexcept;
/// nullptr when the variant was not compiled into this build.
const KernelTable* avx2_kernels() noexcept;

bool backend_available(Backend b) noexcept;
std::vector<Backend> available_backends();
std::string_view backend_name(Backend b) noexcept;

Backend active_backend() noexcept;
/// Throws somgan::Error(Config) if the backend is unavailable on this CPU.
void set_backend(Backend b);

const KernelTable& kernels() noexcept;

inline double dot(std::span<const double> a, std::span<const double> b) noexcept {
  return kernels().dot(a.data(), b.data(), a.size());
}
inline double squared_distance(std::span<const double> a, std::span<const double> b) noexcept {
  return kernels().squared_distance(a.data(), b.data(), a.size());
}
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) noexcept {
  kernels().axpy(alpha, x.data(), y.data(), x.size());
}

}  // namespace somgan::simd
