#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace dcf::detail {

// Hand-rolled distribution mappings so generated data is identical across
// standard libraries, not just across runs.

inline double uniform01(std::mt19937& g) {
  return (static_cast<double>(g()) + 0.5) * (1.0 / 4294967296.0);
}

inline double uniform(std::mt19937& g, double lo, double hi) {
  return lo + (hi - lo) * uniform01(g);
}

inline int uniform_int(std::mt19937& g, int n) {
  return static_cast<int>(g() % static_cast<std::uint32_t>(n));
}

inline double gauss(std::mt19937& g) {
  const double u1 = uniform01(g);
  const double u2 = uniform01(g);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

template <typename T>
void shuffle(std::vector<T>& v, std::mt19937& g) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = g() % i;
    std::swap(v[i - 1], v[j]);
  }
}

/// d^(-beta) for d > 0, with a cheap path for the common 3/4 exponent.
inline double pow_neg(double d, double beta) {
  if (beta == 0.75) return 1.0 / std::sqrt(d * std::sqrt(d));
  if (beta == 0.5) return 1.0 / std::sqrt(d);
  return std::pow(d, -beta);
}

}  // namespace dcf::detail
