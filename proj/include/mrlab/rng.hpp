#pragma once

#include <cstdint>

namespace mrlab {

// Counter-based SplitMix64 stream.  Every draw is a pure function of
// (seed, counter), so sub-streams derived per sample index give identical
// results regardless of evaluation order or thread count.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1), 53-bit mantissa, platform independent
  double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

  // uniform in [-1, 1)
  double next_symmetric() { return 2.0 * next_double() - 1.0; }

  // uniform integer in [0, n)
  std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

  // deterministic sub-stream seed for sample `index`
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t index) {
    SplitMix64 g(seed ^ (0xD1B54A32D192ED03ULL * (index + 1)));
    return g.next_u64();
  }

 private:
  std::uint64_t state_;
};

}  // namespace mrlab
