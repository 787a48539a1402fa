#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace femam {

// Stream tags for seed derivation. Values are part of the on-disk
// reproducibility contract; do not renumber.
enum class Stream : std::uint64_t {
  dataset = 1,
  partition = 2,
  split = 3,
  init = 4,
  shuffle = 5,
  mapping = 6,
  finetune = 7,
  reseed = 8,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Counter-based seed: hash of (base seed, stream, counters...). Any two
/// distinct coordinate tuples give independent streams, so results do not
/// depend on the order in which clients or rounds are processed.
inline std::uint64_t derive_seed(std::uint64_t base, Stream stream,
                                 std::initializer_list<std::uint64_t> counters = {}) {
  std::uint64_t h = splitmix64(base ^ splitmix64(static_cast<std::uint64_t>(stream)));
  for (std::uint64_t c : counters) h = splitmix64(h ^ splitmix64(c + 0x632be59bd9b4e019ULL));
  return h;
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t base, Stream stream,
                    std::initializer_list<std::uint64_t> counters = {}) {
  return Rng(derive_seed(base, stream, counters));
}

}  // namespace femam
