#pragma once

#include <cstdint>
#include <random>

#include "bvdet/scalar.hpp"

namespace bvdet {

// Seeded RNG with hand-rolled draw helpers. std:: distributions are not
// byte-stable across standard library implementations, so reports that must
// reproduce from a seed go through these instead.
struct Rng {
  std::mt19937_64 gen;

  explicit Rng(uint64_t seed) : gen(seed) {}

  uint64_t raw() { return gen(); }

  // uniform integer in [lo, hi], inclusive, by rejection
  int64_t uniform(int64_t lo, int64_t hi) {
    uint64_t span = uint64_t(hi - lo) + 1;
    uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    uint64_t v;
    do {
      v = gen();
    } while (v >= limit);
    return lo + int64_t(v % span);
  }

  double real01() { return double(gen() >> 11) * 0x1.0p-53; }

  double real(double lo, double hi) { return lo + (hi - lo) * real01(); }

  // small nonzero rational, numerator in [-num, num]\{0}, denominator in [1, den]
  Rat rational_nonzero(int num = 9, int den = 5) {
    int64_t n = uniform(1, num);
    if (uniform(0, 1)) n = -n;
    return rat_of(n, uniform(1, den));
  }

  // rational in the symmetric box, zero allowed
  Rat rational(int num = 9, int den = 5) {
    int64_t n = uniform(-num, num);
    return rat_of(n, uniform(1, den));
  }

  GaussRat gauss_rational(int num = 9, int den = 5) {
    return GaussRat{rational(num, den), rational(num, den)};
  }
};

}  // namespace bvdet
