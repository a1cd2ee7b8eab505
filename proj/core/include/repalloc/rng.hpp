#pragma once

#include <cstdint>
#include <random>

namespace repalloc {

// Seedable random generator handle. Every stochastic operation in the
// library takes one of these explicitly, so a whole run is reproducible
// from a single integer seed and independent streams can be formed by
// deriving seeds (e.g. seed ^ trial_index).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  // Uniform draw in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  std::uint64_t next_u64() { return gen_(); }

 private:
  std::mt19937_64 gen_;
};

}  // namespace repalloc
