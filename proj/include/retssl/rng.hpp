#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace retssl {

// Stream tags used when deriving per-item seeds. Keeping them in one place
// makes every random draw in the pipeline addressable as
// (global seed, epoch, item index, view index, purpose).
enum class RngStream : std::uint64_t {
  kInit = 0x1001,
  kRole = 0x2001,
  kAugment = 0x2002,
  kMaskPlan = 0x2003,
  kShuffle = 0x2004,
  kSynth = 0x3001,
  kProbe = 0x4001,
  kPerceptual = 0x5001,
};

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}
}  // namespace detail

// Accepts the integer-ish things that show up in seed derivations (indices,
// epochs, stream tags) without casts at every call site.
struct SeedWord {
  std::uint64_t v;
  constexpr SeedWord(std::uint64_t x) : v(x) {}
  constexpr SeedWord(unsigned x) : v(x) {}
  constexpr SeedWord(int x) : v(static_cast<std::uint64_t>(x)) {}
  constexpr SeedWord(long x) : v(static_cast<std::uint64_t>(x)) {}
  constexpr SeedWord(RngStream s) : v(static_cast<std::uint64_t>(s)) {}
};

// Combines an arbitrary list of words into one seed. Order-sensitive.
inline std::uint64_t derive_seed(std::initializer_list<SeedWord> words) {
  std::uint64_t h = 0x243f6a8885a308d3ULL;
  for (SeedWord w : words) h = detail::splitmix64(h ^ w.v);
  return h;
}

// Small deterministic generator. The stdlib distributions are
// implementation-defined, so all draws are produced by hand here to keep
// outputs bit-stable across platforms and toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ = detail::splitmix64(state_ ^ counter_++);
    return state_;
  }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be >= 1.
  int uniform_int(int n) {
    return static_cast<int>(next_u64() % static_cast<std::uint64_t>(n));
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Box-Muller, no spare caching so the draw count stays predictable.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    u1 = std::max(u1, 0x1.0p-60);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Normal clipped by rejection to +-2 sigma, the usual init convention.
  double truncated_normal(double stddev) {
    for (int i = 0; i < 64; ++i) {
      const double z = normal();
      if (std::abs(z) <= 2.0) return z * stddev;
    }
    return 0.0;
  }

  template <class RandomIt>
  void shuffle(RandomIt first, RandomIt last) {
    const auto n = static_cast<long>(last - first);
    for (long i = n - 1; i > 0; --i) {
      const int j = uniform_int(static_cast<int>(i + 1));
      std::swap(first[i], first[j]);
    }
  }

 private:
  std::uint64_t state_;
  std::uint64_t counter_ = 0;
};

}  // namespace retssl
