#pragma once

#include <cstdint>
#include <initializer_list>

namespace psdet {

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Stateless draw keyed by (seed, k0, k1, ...). Each key word is folded in with
// a full mix, so distinct key tuples give independent-looking outputs and any
// element of a stream can be generated without producing its predecessors.
constexpr std::uint64_t counter_hash(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = mix64(seed);
  for (std::uint64_t k : keys) {
    h = mix64(h ^ mix64(k + 0x632be59bd9b4e019ULL));
  }
  return h;
}

// [0, 1) with 53 random bits.
constexpr double to_unit(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

// [-1, 1)
constexpr double to_symmetric(std::uint64_t bits) { return 2.0 * to_unit(bits) - 1.0; }

// Sequential view over counter_hash(seed, {stream, 0}), counter_hash(seed, {stream, 1}), ...
class CounterStream {
 public:
  constexpr CounterStream(std::uint64_t seed, std::uint64_t stream = 0)
      : seed_(seed), stream_(stream) {}

  constexpr std::uint64_t next() { return counter_hash(seed_, {stream_, counter_++}); }
  constexpr double uniform() { return to_unit(next()); }
  constexpr double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, bound), bound > 0. Bias is below 2^-32 for bounds < 2^32.
  constexpr std::uint64_t below(std::uint64_t bound) { return next() % bound; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
};

}  // namespace psdet
