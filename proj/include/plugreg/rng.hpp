#pragma once

#include <cstdint>

namespace plugreg {

// Counter-based generator. The stream key is a hash of (seed, replication,
// role); the i-th draw is mix64(key + i * golden). Output is a pure function
// of (seed, replication, role, i), so any other implementation of the same
// three lines reproduces every simulated dataset bit-for-bit.

enum class Stream : std::uint64_t {
  covariates = 1,
  noise = 2,
  coefficients = 3,
  treatment = 4,
  selection = 5,
  actions = 6,
  folds = 7,
  probe = 8,
};

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

class CounterRng {
 public:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

  CounterRng(std::uint64_t seed, std::uint64_t replication, Stream role) noexcept
      : key_(mix64(mix64(seed ^ 0x5851F42D4C957F2DULL) ^ mix64(replication + kGolden) ^
                   mix64(static_cast<std::uint64_t>(role) * 0xD1B54A32D192ED03ULL))) {}

  std::uint64_t next_u64() noexcept { return mix64(key_ + (++counter_) * kGolden); }

  /// Uniform on [0, 1).
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller (one draw consumes two counters).
  double normal() noexcept;

  double normal(double mean, double sd) noexcept { return mean + sd * normal(); }

  bool bernoulli(double p) noexcept { return uniform() < p; }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) noexcept { return n == 0 ? 0 : next_u64() % n; }

  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace plugreg
