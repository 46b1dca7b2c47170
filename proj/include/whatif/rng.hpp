#pragma once

#include <complex>
#include <cstdint>
#include <random>

namespace whatif {

/// Seeded random source. Every simulator call takes one of these explicitly;
/// parallel work gets independent streams through derive().
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Counter-based split: stream `index` of family `stream` under `root`.
  /// The result depends only on the three inputs, so any trial can be
  /// replayed in isolation.
  static Rng derive(std::uint64_t root, std::uint64_t stream, std::uint64_t index) {
    return Rng(derive_seed(root, stream, index));
  }
  static std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream, std::uint64_t index) noexcept;

  static std::uint64_t mix(std::uint64_t x) noexcept;

  std::mt19937_64& engine() noexcept { return engine_; }

  /// Uniform on [0, 1).
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  /// Uniform integer on the closed range [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(engine_);
  }
  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  bool bernoulli(double p) { return uniform() < p; }
  /// Circularly-symmetric complex Gaussian with E|z|^2 = variance.
  std::complex<double> complex_normal(double variance = 1.0);

  std::uint64_t next_u64() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace whatif
