#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace fundascreen {

// Seed for a named child stream, e.g. derive_seed(root, "train/member0").
// Stable across platforms: FNV-1a over the name, mixed with splitmix64.
std::uint64_t derive_seed(std::uint64_t root, std::string_view name);

std::uint64_t splitmix64(std::uint64_t x);

// Portable random stream. The uniform and normal transforms are implemented
// here instead of via <random> distributions so that sequences are identical
// across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  bool bernoulli(double p) { return uniform() < p; }

  double normal();
  double normal(double mean, double sd) { return mean + sd * normal(); }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace fundascreen
