#pragma once

// Seeded randomness helpers. Everything here is fully specified (mt19937_64 plus
// hand-rolled draws), so runs are bit-reproducible across platforms and stdlibs;
// std::uniform_*_distribution and std::shuffle are implementation-defined and
// must not be used anywhere in the library.

#include <cstdint>
#include <random>
#include <vector>

namespace lntm {

// splitmix64 finalizer; used to derive independent sub-seeds.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
  return mix64(a ^ mix64(b));
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  // 53-bit mantissa draw in [0, 1).
  double uniform01() {
    return static_cast<double>(gen_() >> 11) * (1.0 / 9007199254740992.0);
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Unbiased-enough bounded draw (128-bit multiply-shift).
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(gen_()) * n) >> 64);
  }

  // Fisher-Yates; deterministic replacement for std::shuffle.
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

}  // namespace lntm
