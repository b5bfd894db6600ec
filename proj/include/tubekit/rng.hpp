#pragma once

#include <cmath>
#include <cstdint>

namespace tubekit {

// SplitMix64 (Steele/Lea/Flood 2014, public-domain constants). Chosen over
// std::mt19937 + <random> distributions because the standard distributions are
// implementation-defined; this generator plus the explicit transforms below
// reproduce identical fixture bytes from the same seed on any platform.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0,1) using the top 53 bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Integer in [0, n) by rejection-free modulo of the high bits; n must be > 0.
  uint64_t below(uint64_t n) { return next_u64() % n; }

  // Standard normal via Box-Muller; one value per call, the pair's twin discarded
  // so the stream position is a pure function of call count.
  double normal() {
    constexpr double kTwoPi = 6.283185307179586476925286766559;
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Independent substream for a worker unit (e.g. one clip); mixes the index
  // through one SplitMix64 step so neighbouring indices decorrelate.
  static Rng substream(uint64_t seed, uint64_t index) {
    Rng mixer(seed ^ (0xA0761D6478BD642FULL * (index + 1)));
    return Rng(mixer.next_u64());
  }

 private:
  uint64_t state_;
};

}  // namespace tubekit
