#ifndef LTRCSIMEX_RNG_HPP
#define LTRCSIMEX_RNG_HPP

#include <cstdint>
#include <random>

namespace ltrcsimex {

// Counter-based substream keys: mixing a tuple of indices into a 64-bit seed
// gives order-independent reproducibility under any worker schedule.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_key(std::uint64_t seed, std::uint64_t a) {
  return splitmix64(seed ^ splitmix64(a));
}

inline std::uint64_t mix_key(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return mix_key(mix_key(seed, a), b);
}

inline std::uint64_t mix_key(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                             std::uint64_t c) {
  return mix_key(mix_key(seed, a, b), c);
}

inline std::mt19937_64 make_engine(std::uint64_t key) {
  return std::mt19937_64(splitmix64(key));
}

}  // namespace ltrcsimex

#endif
