#pragma once

#include <cstdint>
#include <cmath>
#include <vector>

namespace slowgen {

// Deterministic random source. All sampling in the library goes through this
// class so that runs are reproducible bit-for-bit across platforms; the
// standard-library distributions are implementation-defined and are avoided.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) { reseed(seed); }

  void reseed(std::uint64_t seed) {
    // splitmix64 expansion of the seed into the xoshiro256++ state.
    state_[0] = splitmix(seed);
    state_[1] = splitmix(seed);
    state_[2] = splitmix(seed);
    state_[3] = splitmix(seed);
    have_cached_normal_ = false;
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform in [0, 1).
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in (0, 1]; safe as a log() argument.
  double uniform_pos() { return double((next_u64() >> 11) + 1) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

  // Standard normal via Box-Muller with pair caching.
  double normal() {
    if (have_cached_normal_) {
      have_cached_normal_ = false;
      return cached_normal_;
    }
    const double u1 = uniform_pos();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    cached_normal_ = r * std::sin(a);
    have_cached_normal_ = true;
    return r * std::cos(a);
  }

  // Stable stream derivation: sub-stream k of the master seed.
  static std::uint64_t derive(std::uint64_t master, std::uint64_t k) {
    std::uint64_t x = master ^ (0x9e3779b97f4a7c15ULL * (k + 1));
    return splitmix(x);
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }
  static std::uint64_t splitmix(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t state_[4];
  double cached_normal_ = 0.0;
  bool have_cached_normal_ = false;
};

// Exact binomial sampling through a precomputed CDF table; intended for
// repeated draws with fixed (n, p) as in the frame-aggregated random walk.
class BinomialTable {
 public:
  BinomialTable(int n, double p);
  int sample(Rng& rng) const;
  int n() const { return n_; }

 private:
  int n_;
  std::vector<double> cdf_;
};

}  // namespace slowgen
