#pragma once

#include <cstdint>
#include <random>

namespace wsplin {

// splitmix64 finalizer. Used to derive independent, well-separated stream
// seeds from (run seed, epoch, sample, ...) tuples so that worker threads can
// own their RNG without sharing state.
inline uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t seed_for(uint64_t seed, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
  uint64_t h = mix64(seed);
  h = mix64(h ^ a);
  h = mix64(h ^ b);
  h = mix64(h ^ c);
  return h;
}

inline std::mt19937_64 make_rng(uint64_t seed, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
  return std::mt19937_64(seed_for(seed, a, b, c));
}

}  // namespace wsplin
