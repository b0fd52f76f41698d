#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>

namespace hmmva {

// splitmix64 step; used both as a mixer and to derive independent
// sub-stream seeds from (base, counter) pairs.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Counter-based seed splitting: every (base, stream) pair maps to a
// stable seed, so parallel fan-out cannot change results.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return splitmix64(splitmix64(base) ^ splitmix64(stream * 0xd6e8feb86659fd93ULL + 1));
}

// Thin wrapper over mt19937_64 with portable output: mt19937_64 itself is
// fully specified by the standard, and the distributions below avoid the
// implementation-defined std:: distribution algorithms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(splitmix64(seed)) {}

  std::uint64_t raw() { return gen_(); }

  // uniform in [0, 1)
  double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  // Box-Muller, no caching of the second deviate
  double normal(double mean = 0.0, double sd = 1.0) {
    double u1 = 1.0 - uniform01();  // (0, 1]
    double u2 = uniform01();
    double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    return mean + sd * z;
  }

  // CDF inversion; zero-probability entries are never selected
  int discrete(std::span<const double> probs) {
    double u = uniform01();
    double acc = 0.0;
    int last_positive = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      if (probs[i] > 0.0) last_positive = static_cast<int>(i);
      acc += probs[i];
      if (u < acc) return static_cast<int>(i);
    }
    return last_positive;  // guards against acc < 1 from rounding
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace hmmva
