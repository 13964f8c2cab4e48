#pragma once

#include <cstdint>
#include <limits>

#include "qimem/scalar.hpp"

namespace qimem {

/// SplitMix64 generator. Satisfies UniformRandomBitGenerator, but the samplers
/// only use uniform()/bernoulli() so that draws do not depend on the standard
/// library's distribution implementations.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed) : state_(seed) {}

  /// Independent stream for (seed, stream, step). Streams are derived by
  /// hashing the triple, so any schedule that visits the same triples sees the
  /// same numbers.
  static Rng for_stream(std::uint64_t seed, std::uint64_t stream, std::uint64_t step) {
    std::uint64_t key = mix(seed ^ 0x6a09e667f3bcc909ULL);
    key = mix(key ^ (stream + 0xbb67ae8584caa73bULL));
    key = mix(key ^ (step + 0x3c6ef372fe94f82bULL));
    return Rng(key);
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix(state_);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform() < p; }

  /// Index drawn from the (possibly unnormalized within rounding) weights.
  /// Zero-weight entries are never returned.
  template <typename Derived>
  Index categorical(const Eigen::DenseBase<Derived>& weights) {
    double total = 0.0;
    for (Index i = 0; i < weights.size(); ++i) total += to_double(weights(i));
    const double u = uniform() * total;
    double acc = 0.0;
    Index last_positive = -1;
    for (Index i = 0; i < weights.size(); ++i) {
      const double w = to_double(weights(i));
      if (w <= 0.0) continue;
      acc += w;
      last_positive = i;
      if (u < acc) return i;
    }
    return last_positive;
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
};

}  // namespace qimem
