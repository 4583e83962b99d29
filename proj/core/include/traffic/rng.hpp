#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace traffic {

// splitmix64 finalizer; used for seed conditioning and stream derivation.
inline uint64_t mix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// PCG32 (XSH-RR variant): 64-bit LCG state with a per-instance odd stream
// increment. The repo-wide generator: identical seed/stream gives an
// identical sequence on every platform. Normal variates use Box-Muller
// (two uniforms per draw, cosine branch, no cached spare), so each draw is
// a pure function of the state.
class Rng {
 public:
  explicit Rng(uint64_t seed, uint64_t stream = 0) {
    state_ = 0u;
    inc_ = (stream << 1u) | 1u;
    next_u32();
    state_ += mix64(seed);
    next_u32();
  }

  uint32_t next_u32() {
    uint64_t old = state_;
    state_ = old * 6364136223846793005ull + inc_;
    uint32_t xorshifted = static_cast<uint32_t>(((old >> 18u) ^ old) >> 27u);
    uint32_t rot = static_cast<uint32_t>(old >> 59u);
    return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
  }

  uint64_t next_u64() {
    uint64_t hi = next_u32();
    return (hi << 32u) | next_u32();
  }

  // Uniform in [0,1) with 53 random bits.
  double next_double() {
    return static_cast<double>(next_u64() >> 11u) * 0x1.0p-53;
  }

  // Unbiased integer in [0, bound) by rejection.
  uint64_t next_below(uint64_t bound) {
    if (bound <= 1) return 0;
    uint64_t threshold = (0ull - bound) % bound;
    for (;;) {
      uint64_t r = next_u64();
      if (r >= threshold) return r % bound;
    }
  }

  // Standard normal. log1p(-u) keeps the argument strictly positive.
  double next_normal() {
    double u1 = next_double();
    double u2 = next_double();
    double r = std::sqrt(-2.0 * std::log1p(-u1));
    return r * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  // Stream-split: child i is seeded from the parent's current state and
  // runs on a distinct PCG stream, so sibling sequences do not collide.
  Rng split(uint64_t child) const {
    uint64_t seed = mix64(state_ ^ mix64(child + 1));
    uint64_t stream = mix64(inc_ + 2 * child + 1);
    return Rng(seed, stream);
  }

  uint64_t state() const { return state_; }
  uint64_t stream() const { return inc_ >> 1u; }

 private:
  uint64_t state_;
  uint64_t inc_;
};

// Seeded Fisher-Yates.
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (size_t i = v.size(); i > 1; --i) {
    size_t j = static_cast<size_t>(rng.next_below(i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace traffic
