#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace gvgap {

/// Seeded generator with platform-stable draws. The standard distributions
/// are implementation-defined, so ranges are mapped from raw engine output.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, n). Requires n > 0.
  std::uint64_t index(std::uint64_t n);

  /// Uniform integer in [lo, hi].
  std::int64_t between(std::int64_t lo, std::int64_t hi);

  /// Uniform double in [0, 1).
  double unit();

  double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }

  bool bernoulli(double p) { return unit() < p; }

 private:
  std::mt19937_64 engine_;
};

/// Mixes a base seed with a label so that independent streams stay stable
/// when unrelated parts of a run change.
std::uint64_t derive_seed(std::uint64_t base, std::string_view label);

}  // namespace gvgap
