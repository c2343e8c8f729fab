#pragma once

#include <cstdint>
#include <span>
#include <string_view>

namespace gcsim {

/// splitmix64 mixing step; the backbone of seed derivation.
std::uint64_t splitmix64(std::uint64_t& state);

/// Derives a child seed from (master, label path) by counter-style mixing.
/// Deterministic, order-sensitive, and collision-resistant enough for
/// stream separation: every module draws from its own labeled stream.
std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path);
std::uint64_t derive_seed(std::uint64_t master, std::string_view label);
std::uint64_t derive_seed(std::uint64_t master, std::string_view label,
                          std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0);

/// xoshiro256** stream seeded via splitmix64. Self-contained so that
/// sampled values are stable across standard-library versions.
class Rng {
public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  /// Uniform double in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  /// Standard normal via Marsaglia polar; one cached value of the pair.
  double normal();
  double normal(double mean, double sd);
  bool bernoulli(double p) { return uniform() < p; }
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n);
  /// Class draw from a probability vector by CDF inversion.
  std::size_t categorical(std::span<const double> probs);

private:
  std::uint64_t s_[4];
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

/// Stateless standard-normal draw keyed by (seed, unit, time, channel).
/// Regime switches cannot perturb process noise: the draw for a given key
/// is the same no matter what was sampled before it.
double keyed_normal(std::uint64_t seed, std::uint64_t unit, std::uint64_t t, std::uint64_t channel);
/// Stateless uniform in [0,1) with the same keying scheme.
double keyed_uniform(std::uint64_t seed, std::uint64_t unit, std::uint64_t t, std::uint64_t channel);

} // namespace gcsim
