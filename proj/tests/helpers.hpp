#pragma once

#include <cmath>
#include <vector>

#include "somgan/matrix.hpp"
#include "somgan/rng.hpp"

namespace testutil {

inline somgan::Matrix random_matrix(std::size_t r, std::size_t c, somgan::RandomStream& rng, double scale = 1.0) {
  somgan::Matrix m(r, c);
  for (double& v : m.values()) v = rng.normal(0.0, scale);
  return m;
}

inline std::vector<double> random_vector(std::size_t n, somgan::RandomStream& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

inline double max_abs_diff(const somgan::Matrix& a, const somgan::Matrix& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

}  // namespace testutil
