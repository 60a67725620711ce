#pragma once

#include <cstdint>

namespace mapattack {

/// splitmix64 step; also used to mix seeds into substreams.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

/// Small deterministic RNG. Behaviour is pinned by this implementation (not the
/// standard library), so seeded runs replay bit-identically across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {
    // Warm up so nearby seeds decorrelate.
    next_u64();
    next_u64();
  }

  std::uint64_t next_u64() { return splitmix64(state_); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi] inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(next_u64() % span);
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// +1 or -1 with equal probability.
  int sign() { return (next_u64() & 1u) ? 1 : -1; }

  /// Derive an independent substream seed from (seed, tag).
  static std::uint64_t mix(std::uint64_t seed, std::uint64_t tag) {
    std::uint64_t s = seed ^ (0x9e3779b97f4a7c15ull + (tag << 1));
    splitmix64(s);
    return splitmix64(s);
  }

 private:
  std::uint64_t state_;
};

}  // namespace mapattack
