#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace hat {

// Deterministic RNG used everywhere randomness is needed. std::mt19937_64 has
// a standard-mandated output sequence, and the derived draws below avoid the
// implementation-defined std::*_distribution classes, so identical seeds give
// identical streams on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform double in [0, 1) with 53 bits of precision.
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, n). n must be > 0; modulo bias is irrelevant at
  // the sizes used here and keeps the draw count per call fixed.
  std::uint64_t below(std::uint64_t n) { return gen_() % n; }

  // Standard normal via Box-Muller (portable, unlike std::normal_distribution).
  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.141592653589793238462643 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Stable 64-bit FNV-1a. Used for feature hashing and fixture keys; must not
// change across releases, so std::hash (implementation-defined) is not used.
inline std::uint64_t fnv1a64(std::string_view s,
                             std::uint64_t basis = 14695981039346656037ull) {
  std::uint64_t h = basis;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace hat
