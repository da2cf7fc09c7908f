#pragma once

#include <cstdint>
#include <string_view>

namespace rsindex {

// SplitMix64. Chosen over <random> engines + distributions because the
// standard distributions are not bit-reproducible across library vendors.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64();

  // Uniform on [0, 1) with 53 bits of mantissa.
  double uniform();

  // Uniform integer in [0, n). n must be > 0.
  std::uint64_t uniform_int(std::uint64_t n);

  bool bernoulli(double p) { return uniform() < p; }

  // Standard normal via Box-Muller; the second variate is cached.
  double normal();
  double normal(double mean, double sd) { return mean + sd * normal(); }

 private:
  std::uint64_t state_;
  double cached_normal_ = 0.0;
  bool has_cached_ = false;
};

// Labeled sub-seed derivation: one top-level seed feeds every random stream.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view label,
                          std::uint64_t index = 0);

}  // namespace rsindex
