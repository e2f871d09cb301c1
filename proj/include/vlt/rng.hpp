#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace vlt {

// Deterministic splitmix64 stream. State transition per draw:
//   s += 0x9E3779B97F4A7C15
//   z = s; z ^= z >> 30; z *= 0xBF58476D1CE4E5B9
//   z ^= z >> 27; z *= 0x94D049BB133111EB; return z ^ (z >> 31)
// Pure 64-bit integer arithmetic, so identical seeds produce identical
// streams on every platform and in every port of this library.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Unbiased-enough integer in [0, n) via 128-bit multiply; n must be > 0.
  uint64_t next_below(uint64_t n) {
    return static_cast<uint64_t>((static_cast<__uint128_t>(next_u64()) * n) >> 64);
  }

  // Box-Muller, cosine branch only. Consumes two uniforms per draw so the
  // stream position is a pure function of the call count.
  double normal(double mean = 0.0, double stddev = 1.0) {
    double u1 = uniform01();
    double u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log1p(-u1));
    constexpr double two_pi = 6.283185307179586476925286766559;
    return mean + stddev * r * std::cos(two_pi * u2);
  }

  // Zero-mean normal resampled until |x| <= 2 stddev.
  double truncated_normal(double stddev) {
    if (stddev == 0.0) return 0.0;
    for (;;) {
      double x = normal(0.0, stddev);
      if (std::abs(x) <= 2.0 * stddev) return x;
    }
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  uint64_t state() const { return state_; }
  void set_state(uint64_t s) { state_ = s; }

  // Derives an independent substream seed from a base seed and a salt.
  static uint64_t derive(uint64_t seed, uint64_t salt) {
    Rng r(seed ^ (0xD1B54A32D192ED03ULL * (salt + 1)));
    return r.next_u64();
  }

 private:
  uint64_t state_;
};

}  // namespace vlt
