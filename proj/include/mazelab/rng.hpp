#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string_view>

namespace mazelab {

// Identifier written into every artifact that depends on random streams.
inline constexpr std::string_view kRngAlgorithmId = "splitmix64-counter/v1";

inline constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

// Child key for (parent, label). Distinct labels give independent streams.
inline constexpr std::uint64_t derive_key(std::uint64_t parent, std::uint64_t label) {
  return mix64(mix64(parent ^ 0x6A09E667F3BCC909ULL) + mix64(label + 0x9E3779B97F4A7C15ULL));
}

inline constexpr std::uint64_t derive_key(std::uint64_t parent, std::string_view label) {
  return derive_key(parent, fnv1a64(label));
}

// Seed in a named namespace, e.g. ("train", 7) or ("eval", 1234).
inline constexpr std::uint64_t namespaced_seed(std::string_view ns, std::uint64_t seed) {
  return derive_key(fnv1a64(ns), seed);
}

// Counter-based generator: output i is a pure function of (key, i), so a
// stream can be split or replayed without carrying hidden state.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  constexpr explicit CounterRng(std::uint64_t key = 0, std::uint64_t counter = 0)
      : key_(key), counter_(counter) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  constexpr result_type operator()() { return at(counter_++); }
  constexpr result_type at(std::uint64_t i) const {
    return mix64(key_ + (i + 1) * 0x9E3779B97F4A7C15ULL);
  }

  constexpr CounterRng split(std::uint64_t label) const { return CounterRng(derive_key(key_, label)); }
  constexpr CounterRng split(std::string_view label) const { return CounterRng(derive_key(key_, label)); }

  constexpr std::uint64_t key() const { return key_; }
  constexpr std::uint64_t counter() const { return counter_; }

  // Unbiased integer in [0, n). n must be > 0.
  std::uint64_t uniform_int(std::uint64_t n) {
    // Lemire's nearly-divisionless method.
    unsigned __int128 m = static_cast<unsigned __int128>((*this)()) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
      const std::uint64_t threshold = (0 - n) % n;
      while (low < threshold) {
        m = static_cast<unsigned __int128>((*this)()) * n;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  double normal() {
    double u1 = uniform01();
    const double u2 = uniform01();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_;
};

}  // namespace mazelab
