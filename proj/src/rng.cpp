#include "lfsr/rng.hpp"

namespace lfsr {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  return splitmix64(splitmix64(seed) ^ splitmix64(salt + 0x632be59bd9b4e019ULL));
}

Rng::Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

Rng Rng::child(std::string_view purpose) const { return Rng(mix_seed(seed_, fnv1a(purpose))); }

Rng Rng::child(std::uint64_t index) const { return Rng(mix_seed(seed_ ^ 0x5bd1e995ULL, index)); }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * unit_(engine_); }

double Rng::normal(double mean, double stddev) { return mean + stddev * standard_normal_(engine_); }

double Rng::truncated_normal(double mean, double stddev, double bound_sd) {
  if (stddev <= 0.0) return mean;
  for (;;) {
    const double z = standard_normal_(engine_);
    if (z >= -bound_sd && z <= bound_sd) return mean + stddev * z;
  }
}

std::size_t Rng::index(std::size_t n) {
  std::uniform_int_distribution<std::size_t> d(0, n - 1);
  return d(engine_);
}

}  // namespace lfsr
