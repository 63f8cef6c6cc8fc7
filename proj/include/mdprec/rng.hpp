#pragma once

// Seeded random streams. All randomness in a run derives from one seed
// through named sub-streams, so every stage is reproducible on its own.

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace mdprec {

std::uint64_t splitmix64(std::uint64_t x);

// Seed for the sub-stream `name` of `seed`.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view name);
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);

  // Index drawn proportionally to non-negative `weights` (at least one positive).
  std::size_t categorical(std::span<const double> weights);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace mdprec
