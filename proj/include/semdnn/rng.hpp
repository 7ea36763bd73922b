#pragma once
#include <cstdint>
#include <cmath>

namespace semdnn {

// Deterministic RNG with an explicit gaussian transform so that noise
// realizations are bit-identical across platforms and standard library
// versions (std::normal_distribution is implementation defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(splitmix(seed ^ 0x9e3779b97f4a7c15ull)) {}

  std::uint64_t next_u64() {
    // xorshift* over a splitmix-initialized state
    std::uint64_t x = state_;
    x ^= x >> 12;
    x ^= x << 25;
    x ^= x >> 27;
    state_ = x;
    return x * 0x2545f4914f6cdd1dull;
  }

  // uniform in (0, 1]
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // one standard normal per call (Box-Muller, cosine branch only)
  double gaussian() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

  // integer in [0, n)
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

  // Independent substream for e.g. per-sample parallelism.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t index) {
    return splitmix(seed + 0x632be59bd9b4e019ull * (index + 1));
  }

 private:
  static std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }
  std::uint64_t state_;
};

}  // namespace semdnn
