#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace lfsr {

/// Seeded random stream. All randomness in the pipeline flows from one root
/// seed through `child()` so that a single integer pins a whole run.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const { return seed_; }

  /// Independent stream for a named purpose ("deform", "gmm", ...).
  Rng child(std::string_view purpose) const;
  /// Independent stream for an indexed item (sample i, draw i, ...).
  Rng child(std::uint64_t index) const;

  std::uint64_t next_u64() { return engine_(); }
  double uniform(double lo, double hi);
  double normal(double mean, double stddev);
  /// Normal draw restricted to |x - mean| <= bound_sd * stddev (rejection).
  double truncated_normal(double mean, double stddev, double bound_sd);
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> standard_normal_{0.0, 1.0};
  std::uniform_real_distribution<double> unit_{0.0, 1.0};
};

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

}  // namespace lfsr
