#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace mctailor {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic random stream. std::mt19937_64 output is fully specified by
// the standard; all derived draws below avoid std::*_distribution, whose
// results are implementation-defined, so streams reproduce across platforms.
//
// fork(index) derives an independent stream from (seed, index) alone, not
// from the current engine state; this is what gives samplers their
// per-particle reproducibility contract.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform double in [0, 1).
  double real01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform double in (0, 1); redraws the (measure-zero) exact zero.
  double positive01() {
    double u = real01();
    while (u == 0.0) u = real01();
    return u;
  }

  // Uniform index in [0, n). Multiply-shift; bias is O(n / 2^64).
  std::size_t below(std::size_t n) {
    return static_cast<std::size_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  // Draw an index from an unnormalized weight vector by CDF walk.
  std::size_t categorical(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    double u = real01() * total;
    double cum = 0.0;
    for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
      cum += weights[i];
      if (u < cum) return i;
    }
    return weights.empty() ? 0 : weights.size() - 1;
  }

  Rng fork(std::uint64_t index) const {
    return Rng(splitmix64(seed_ ^ splitmix64(index + 0x51ed2701ab0e7045ULL)));
  }

  // In-place Fisher-Yates shuffle (std::shuffle's draw sequence is
  // implementation-defined, this one is not).
  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = below(i);
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace mctailor
