#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace fimfuse {

/// Seeded generator with portable derived distributions.
///
/// std::mt19937_64 is bit-specified by the standard, but the std::*_distribution
/// adaptors are not, so uniforms and normals are derived here by fixed
/// formulas. The identifier below is written into synthetic dataset
/// manifests so other implementations can reproduce the stream.
class Rng {
 public:
  static constexpr const char* kAlgorithm = "mt19937_64/u53/box-muller-v1";

  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, bound). bound must be positive.
  std::uint64_t below(std::uint64_t bound) {
    // Lemire-style rejection keeps the draw unbiased.
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      const std::uint64_t x = engine_();
      if (x >= threshold) return x % bound;
    }
  }

  /// Standard normal, one value per two uniforms (no cached spare).
  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log1p(-u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::mt19937_64 engine_;
};

/// SplitMix64 finalizer, used to derive independent stream seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return mix_seed(mix_seed(seed) ^ mix_seed(stream + 0x5851F42D4C957F2DULL));
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a,
                                    std::uint64_t b, std::uint64_t c) {
  return derive_seed(derive_seed(derive_seed(seed, a), b), c);
}

}  // namespace fimfuse
