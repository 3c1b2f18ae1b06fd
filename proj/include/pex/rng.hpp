#ifndef PEX_RNG_HPP_
#define PEX_RNG_HPP_

#include <cstdint>
#include <random>

namespace pex
{

/**
 * @brief Seeded random stream.
 *
 * Every stochastic routine takes one of these by reference; a run owns a single
 * instance and consumes it in a fixed order, which makes runs bit-reproducible.
 */
class Rng
{
public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  double uniform() { return unit_(engine_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * unit_(engine_); }
  double normal() { return normal_(engine_); }

  /// Uniform integer in [0, n).
  std::uint64_t index(std::uint64_t n)
  {
    return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(engine_);
  }

  /// Child stream derived from this one's next output.
  Rng split() { return Rng(engine_()); }

  std::mt19937_64 & engine() { return engine_; }

private:
  std::mt19937_64 engine_;
  std::uniform_real_distribution<double> unit_{0.0, 1.0};
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Mixes a base seed with a stream index (splitmix64 finalizer).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream)
{
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace pex

#endif  // PEX_RNG_HPP_
