#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace adcrowd {

// All randomness in the project flows from this SplitMix64 sequence.
// The generator and every derivation below are part of the reproducibility
// contract: corpora, initializations and shuffles are pure functions of the
// seeds fed in here.
//
// SplitMix64 (Steele, Lea, Flood 2014):
//   state += 0x9E3779B97F4A7C15
//   z = state
//   z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//   z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//   return z ^ (z >> 31)
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform double in [0, 1): top 53 bits scaled by 2^-53.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) {
    return lo + (hi - lo) * next_double();
  }

  // Uniform integer in [0, n). Plain modulo; the bias at 64 bits is
  // irrelevant for data generation and the mapping is trivially portable.
  std::uint64_t uniform_int(std::uint64_t n) { return next_u64() % n; }

  // Standard normal via Box-Muller, cosine branch only (one draw consumes
  // two uniforms, the sine value is discarded).
  double normal() {
    double u1 = 1.0 - next_double();  // (0, 1]
    double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

 private:
  std::uint64_t state_;
};

// FNV-1a, used only to turn salt strings into 64-bit tags.
inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

// One SplitMix64 output step applied to x: used to mix seeds and stream ids.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Canonical derived stream: rng_for(seed, "scene", index) and friends.
// Stream identity is (base seed, salt string, index); the derivation is
// mix64(mix64(seed ^ fnv1a64(salt)) + index).
inline SplitMix64 rng_for(std::uint64_t seed, std::string_view salt,
                          std::uint64_t index) {
  return SplitMix64(mix64(mix64(seed ^ fnv1a64(salt)) + index));
}

}  // namespace adcrowd
