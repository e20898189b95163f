#pragma once

#include <cstdint>
#include <random>

namespace anmt {

// Deterministic random source. All randomness in the project flows through
// this wrapper so that results depend only on the seed and the call sequence,
// not on implementation-defined distribution internals.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1) with 53 bits of precision.
  double uniform() {
    return static_cast<double>(gen_() >> 11) * (1.0 / 9007199254740992.0);
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform in [0, n) by rejection sampling; unbiased and stream-stable.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) {
      return 0;
    }
    std::uint64_t mask = n - 1;
    mask |= mask >> 1;
    mask |= mask >> 2;
    mask |= mask >> 4;
    mask |= mask >> 8;
    mask |= mask >> 16;
    mask |= mask >> 32;
    for (;;) {
      const std::uint64_t v = gen_() & mask;
      if (v < n) {
        return v;
      }
    }
  }

  // Uniform integer in [lo, hi] inclusive.
  int uniform_int(int lo, int hi) {
    return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi - lo + 1)));
  }

  // Derive an independent child stream (used to give each parameter its own
  // reproducible initialization regardless of creation order changes).
  Rng fork() { return Rng(gen_()); }

 private:
  std::mt19937_64 gen_;
};

}  // namespace anmt
