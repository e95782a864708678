#pragma once

#include <cmath>
#include <cstdint>

namespace gapfill {

/// Counter-seeded PRNG with portable output. mt19937_64 supplies the
/// stream; the uniform/normal mappings are written out so results do not
/// depend on libstdc++ distribution internals.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(splitmix(seed)) {}
  Rng(uint64_t seed, uint64_t stream) : state_(splitmix(splitmix(seed) ^ stream)) {}

  uint64_t next_u64() {
    // xorshift64* — small, portable, plenty for mask/field synthesis
    uint64_t x = state_;
    x ^= x >> 12;
    x ^= x << 25;
    x ^= x >> 27;
    state_ = x;
    return x * 0x2545F4914F6CDD1Dull;
  }

  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  int uniform_int(int lo, int hi) {  // inclusive
    return lo + static_cast<int>(next_u64() % static_cast<uint64_t>(hi - lo + 1));
  }

  double normal() {
    double u1 = uniform(), u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

 private:
  static uint64_t splitmix(uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
  }

  uint64_t state_;
};

}  // namespace gapfill
