#pragma once

#include <cstdint>
#include <initializer_list>

namespace cpgnn {

// Counter-based randomness: every draw is a pure function of its key, so
// results do not depend on call order or thread count.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t hash_key(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x243f6a8885a308d3ULL;
  for (std::uint64_t p : parts) h = splitmix64(h ^ splitmix64(p));
  return h;
}

// Uniform in [0, 1) with 53 bits of resolution.
constexpr double uniform01(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

inline double uniform_at(std::initializer_list<std::uint64_t> key) { return uniform01(hash_key(key)); }

// Sequential stream over the same mixer; used where a plain generator is
// convenient (initialization, shuffles). State is a single counter.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t counter = 0) : seed_(seed), counter_(counter) {}

  std::uint64_t next() { return hash_key({seed_, counter_++}); }
  double uniform() { return uniform01(next()); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Unbiased enough for shuffling small ranges; n must be > 0.
  std::uint64_t below(std::uint64_t n) { return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)); }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_;
};

}  // namespace cpgnn
