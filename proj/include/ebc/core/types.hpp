#pragma once

#include <Eigen/Dense>

#include <charconv>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <system_error>

namespace ebc {

using Vec = Eigen::VectorXd;
/// Column-major; batched data stores one sample per column.
using Mat = Eigen::MatrixXd;
using Rng = std::mt19937_64;

inline bool all_finite(const Eigen::Ref<const Mat>& m) { return m.allFinite(); }

/// Shortest decimal text that parses back to the identical double.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline bool parse_double(std::string_view text, double& out) {
  auto res = std::from_chars(text.data(), text.data() + text.size(), out);
  return res.ec == std::errc{} && res.ptr == text.data() + text.size();
}

/// Derive an independent stream seed from a base seed and a salt (splitmix64).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Uniform double in [0, 1) from the top 53 bits of one engine draw.
inline double canonical(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Standard normal draws. std::normal_distribution caches a spare value, which
/// makes streams depend on call history; Box-Muller without caching does not.
inline double std_normal(Rng& rng) {
  constexpr double two_pi = 6.283185307179586476925;
  double u1 = 0.0;
  while (u1 <= 0.0) u1 = canonical(rng);
  const double u2 = canonical(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

inline double uniform(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * canonical(rng);
}

/// Uniform integer in [0, n).
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return static_cast<std::size_t>(canonical(rng) * static_cast<double>(n)) % n;
}

}  // namespace ebc
