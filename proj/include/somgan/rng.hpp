#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace somgan {

// Splittable seeding: a child seed is a SplitMix64 mix of the parent seed
// and a tag, so adding trials or stages never perturbs existing streams.
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t tag) noexcept;
std::uint64_t derive_seed(std::uint64_t parent, std::string_view tag) noexcept;

class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on [0, 1), built from the top 53 bits of one engine draw.
  double uniform() noexcept {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  double normal(double mean, double stddev) {
    return mean + stddev * normal_(engine_);
  }
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace somgan
