#pragma once

#include <cmath>
#include <cstdint>

namespace carnot {

// Counter-based randomness: every (seed, index) pair owns an independent
// splitmix64 stream, so quadrature results do not depend on how samples are
// distributed over worker threads.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
  return splitmix64(a ^ (0x9E3779B97F4A7C15ull + (b << 6) + (b >> 2)));
}

/// Small deterministic generator; cheap to construct per sample.
class SampleRng {
 public:
  explicit SampleRng(std::uint64_t seed) : state_(splitmix64(seed)) {}
  SampleRng(std::uint64_t seed, std::uint64_t index)
      : state_(splitmix64(mix64(seed, index))) {}
  SampleRng(std::uint64_t seed, std::uint64_t index, std::uint64_t attempt)
      : state_(splitmix64(mix64(mix64(seed, index), attempt))) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    std::uint64_t x = state_;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
  }

  /// Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

 private:
  std::uint64_t state_;
};

}  // namespace carnot
