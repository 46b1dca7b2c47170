#include "whatif/rng.hpp"

#include <cmath>

namespace whatif {

std::uint64_t Rng::mix(std::uint64_t x) noexcept {
  // splitmix64 finalizer
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t Rng::derive_seed(std::uint64_t root, std::uint64_t stream, std::uint64_t index) noexcept {
  std::uint64_t s = mix(root);
  s = mix(s ^ mix(stream + 0x632be59bd9b4e019ULL));
  return mix(s ^ mix(index + 0x85157af5ULL));
}

std::complex<double> Rng::complex_normal(double variance) {
  const double sd = std::sqrt(variance / 2.0);
  const double re = normal(0.0, sd);
  const double im = normal(0.0, sd);
  return {re, im};
}

}  // namespace whatif
