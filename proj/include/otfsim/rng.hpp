#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

#include "otfsim/types.hpp"

namespace otfsim {

/// Counter-based pseudo-random generator built on the splitmix64 finalizer.
///
/// Each generator is a (key, counter) pair: draw i of a stream is a pure
/// function of the key and i, so streams never overlap by construction and
/// results do not depend on interleaving with other generators. fork() derives
/// a child key from the parent key and a tag without consuming parent draws,
/// which makes per-trial / per-purpose substreams reproducible regardless of
/// evaluation order (the basis for run-to-run and thread-count determinism).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : key_(mix(seed + kGamma)) {}

  std::uint64_t next_u64() { return mix(key_ + (++counter_) * kGamma); }

  /// Child stream for an independent purpose. Same (parent, tag) always
  /// yields the same stream; does not advance the parent.
  Rng fork(std::uint64_t tag) const {
    return Rng(FromKey{}, mix(key_ ^ mix(tag + kGamma)));
  }
  Rng fork(std::string_view name) const { return fork(fnv1a(name)); }

  /// Uniform on [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Unbiased integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n) {
    const std::uint64_t limit = n * (UINT64_MAX / n);
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  /// Standard normal via Box-Muller; draws two uniforms per pair.
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    // Shift into (0, 1] so the log argument never vanishes.
    const double u1 =
        static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    cached_ = r * std::sin(a);
    have_cached_ = true;
    return r * std::cos(a);
  }

  /// Circularly-symmetric complex normal with E|z|^2 = variance.
  cplx cnormal(double variance) {
    const double s = std::sqrt(variance / 2.0);
    const double re = normal();
    const double im = normal();
    return {s * re, s * im};
  }

 private:
  struct FromKey {};
  Rng(FromKey, std::uint64_t key) : key_(key) {}

  static constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;

  static std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ULL;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebULL;
    z ^= z >> 31;
    return z;
  }

  static std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    return h;
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double cached_ = 0.0;
  bool have_cached_ = false;
};

}  // namespace otfsim
