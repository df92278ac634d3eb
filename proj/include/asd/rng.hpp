#ifndef ASD_RNG_HPP_
#define ASD_RNG_HPP_

#include <cmath>
#include <cstdint>
#include <random>

namespace asd {

// Derives an independent stream seed from a master seed and a stream index.
// SplitMix64 finalizer: the mapping is pure, so any single stream can be
// reproduced in isolation from (master, stream).
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Seeded generator with explicit draw algorithms so sequences do not depend
// on standard-library distribution internals.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  // Uniform in [0, 1): 53-bit mantissa construction.
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; draws two uniforms per pair of normals.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  // Uniform integer in [0, n), rejection-sampled to avoid modulo bias.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) return 0;
    std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                          std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t v = gen_();
    while (v >= limit) v = gen_();
    return v % n;
  }

  std::uint64_t raw() { return gen_(); }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace asd

#endif  // ASD_RNG_HPP_
