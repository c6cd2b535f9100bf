#pragma once

#include <cstdint>
#include <vector>

namespace marlab {

// Counter-based pseudo-random stream (splitmix64). The i-th output of a
// stream is a pure function of (seed, i), so any language can reproduce a
// run's random sequence from the seed alone. All randomness in the project
// flows through one Rng instance per run.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), counter_(0) {}

  std::uint64_t next_u64() {
    std::uint64_t z = seed_ + (++counter_) * 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53-bit resolution.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Uniform integer in [0, n). n must be positive.
  int next_below(int n) {
    int v = static_cast<int>(next_double() * n);
    return v >= n ? n - 1 : v;
  }

  // Sample an index from unnormalized non-negative weights.
  int categorical(const std::vector<double>& probs) {
    double total = 0.0;
    for (double p : probs) total += p;
    double r = next_double() * total;
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < probs.size(); ++i) {
      acc += probs[i];
      if (r < acc) return static_cast<int>(i);
    }
    return static_cast<int>(probs.size()) - 1;
  }

  // Fisher-Yates shuffle of 0..n-1.
  std::vector<int> permutation(int n) {
    std::vector<int> p(n);
    for (int i = 0; i < n; ++i) p[i] = i;
    for (int i = n - 1; i > 0; --i) {
      int j = next_below(i + 1);
      std::swap(p[i], p[j]);
    }
    return p;
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_;
};

}  // namespace marlab
