#include "gcsim/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace gcsim {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
  std::uint64_t state = master ^ 0xa5a5a5a55a5a5a5aULL;
  std::uint64_t out = splitmix64(state);
  for (std::uint64_t p : path) {
    state ^= p;
    out = splitmix64(state);
  }
  return out;
}

namespace {
std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}
} // namespace

std::uint64_t derive_seed(std::uint64_t master, std::string_view label) {
  return derive_seed(master, {fnv1a64(label)});
}

std::uint64_t derive_seed(std::uint64_t master, std::string_view label,
                          std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return derive_seed(master, {fnv1a64(label), a, b, c});
}

Rng::Rng(std::uint64_t seed) {
  std::uint64_t state = seed;
  for (auto& s : s_) s = splitmix64(state);
}

std::uint64_t Rng::next_u64() {
  auto rotl = [](std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); };
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
  if (has_cached_normal_) {
    has_cached_normal_ = false;
    return cached_normal_;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  double f = std::sqrt(-2.0 * std::log(s) / s);
  cached_normal_ = v * f;
  has_cached_normal_ = true;
  return u * f;
}

double Rng::normal(double mean, double sd) { return mean + sd * normal(); }

std::size_t Rng::index(std::size_t n) {
  // Rejection-free modulo bias is negligible for the pool sizes in play,
  // but multiply-shift keeps draws unbiased anyway.
  return static_cast<std::size_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
}

std::size_t Rng::categorical(std::span<const double> probs) {
  double u = uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    double p = probs[i];
    if (!(p >= 0.0) || !std::isfinite(p))
      throw std::invalid_argument("categorical: degenerate probability vector");
    acc += p;
    if (u < acc) return i;
  }
  return probs.size() - 1; // u landed in the rounding tail
}

double keyed_uniform(std::uint64_t seed, std::uint64_t unit, std::uint64_t t, std::uint64_t channel) {
  std::uint64_t s = derive_seed(seed, {unit, t, channel});
  return static_cast<double>(splitmix64(s) >> 11) * 0x1.0p-53;
}

double keyed_normal(std::uint64_t seed, std::uint64_t unit, std::uint64_t t, std::uint64_t channel) {
  std::uint64_t s = derive_seed(seed, {unit, t, channel});
  double u1 = static_cast<double>(splitmix64(s) >> 11) * 0x1.0p-53;
  double u2 = static_cast<double>(splitmix64(s) >> 11) * 0x1.0p-53;
  // Box-Muller; u1 nudged away from zero so log stays finite.
  double r = std::sqrt(-2.0 * std::log(1.0 - u1));
  return r * std::cos(2.0 * M_PI * u2);
}

} // namespace gcsim
