// Deterministic random variate generation.
//
// Contract: the engine is std::mt19937_64 (bit-exact across standard
// library implementations); every variate below is derived from raw
// 64-bit draws with the stated formulas, so seeded runs reproduce
// identically on any platform. Do not swap in std::*_distribution —
// those are implementation-defined.
#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

namespace riskdca {

// SplitMix64 finalizer; used to decorrelate seeds and stream ids.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(splitmix64(seed)) {}

  // Independent child stream; stable no matter how many draws the parent
  // has made. Use one stream per bootstrap replicate / fold / purpose.
  static Rng stream(std::uint64_t seed, std::uint64_t id) {
    return Rng(splitmix64(seed) ^ splitmix64(0x51ed2701a96e6e2bULL + id));
  }

  std::uint64_t next() { return gen_(); }

  // Uniform on [0,1) with 53-bit resolution: (u >> 11) * 2^-53.
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0,n) via the high 64 bits of a 128-bit product.
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next()) * n) >> 64);
  }

  bool bernoulli(double p) { return uniform01() < p; }

  // Inverse-CDF exponential; rate 0 maps to +infinity (no event).
  double exponential(double rate) {
    if (rate <= 0.0) return std::numeric_limits<double>::infinity();
    return -std::log1p(-uniform01()) / rate;
  }

  // Standard normal via Box-Muller (two draws per call, cosine branch).
  double normal() {
    double u1 = uniform01();
    double u2 = uniform01();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.141592653589793238462643383279502884 * u2);
  }

  // Fisher-Yates shuffle driven by below().
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace riskdca
