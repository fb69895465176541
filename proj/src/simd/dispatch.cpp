#include <atomic>
#include <cstdlib>
#include <string>

#include "somgan/error.hpp"
#include "somgan/simd.hpp"

namespace somgan::simd {

#if defined(SOMGAN_HAVE_AVX2)
const KernelTable* avx2_kernels_impl() noexcept;
#endif

const KernelTable* avx2_kernels() noexcept {
#if defined(SOMGAN_HAVE_AVX2)
  return avx2_kernels_impl();
#else
  return nullptr;
#endif
}

namespace {

bool cpu_has_avx2_fma() noexcept {
#if defined(SOMGAN_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* table_for(Backend b) noexcept {
  switch (b) {
    case Backend::Scalar: return &scalar_kernels();
    case Backend::Avx2: return cpu_has_avx2_fma() ? avx2_kernels() : nullptr;
  }
  return nullptr;
}

Backend initial_backend() noexcept {
  if (const char* env = std::getenv("SOMGAN_SIMD")) {
    const std::string v(env);
    if (v == "scalar") return Backend::Scalar;
    if (v == "avx2" && table_for(Backend::Avx2)) return Backend::Avx2;
  }
  return table_for(Backend::Avx2) ? Backend::Avx2 : Backend::Scalar;
}

struct State {
  std::atomic<Backend> backend{initial_backend()};
  std::atomic<const KernelTable*> table{table_for(backend.load())};
};

State& state() noexcept {
  static State s;
  return s;
}

}  // namespace

bool backend_available(Backend b) noexcept { return table_for(b) != nullptr; }

std::vector<Backend> available_backends() {
  std::vector<Backend> out{Backend::Scalar};
  if (backend_available(Backend::Avx2)) out.push_back(Backend::Avx2);
  return out;
}

std::string_view backend_name(Backend b) noexcept {
  switch (b) {
    case Backend::Scalar: return "scalar";
    case Backend::Avx2: return "avx2";
  }
  return "unknown";
}

Backend active_backend() noexcept { return state().backend.load(); }

void set_backend(Backend b) {
  const KernelTable* t = table_for(b);
  if (!t) fail(ErrorKind::Config, "SIMD backend not available: " + std::string(backend_name(b)));
  state().table.store(t);
  state().backend.store(b);
}

const KernelTable& kernels() noexcept { return *state().table.load(std::memory_order_relaxed); }

}  // namespace somgan::simd
