#pragma once

// Central finite-difference checks over every trainable piece: nn layers,
// the losses, the sigmoid membership objective and the composed
// discriminator / generator objectives on tiny instances.

#include <cstdint>
#include <string>
#include <vector>

namespace somgan {

inline constexpr double kLayerTolerance = 1e-4;
inline constexpr double kCompositeTolerance = 1e-3;

struct GradCheckResult {
  std::string name;
  double max_error = 0.0;
  double tolerance = 0.0;

  bool passed() const noexcept { return max_error < tolerance; }
};

std::vector<GradCheckResult> run_gradient_suite(std::uint64_t seed);

}  // namespace somgan
