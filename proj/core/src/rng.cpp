#include "syncap/rng.hpp"

#include <stdexcept>
#include <string>

namespace syncap {

uint64_t splitmix64(uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Rng::Rng(uint64_t seed) : engine_(seed), seed_(seed) {}

Rng Rng::for_stream(uint64_t seed, uint64_t index) {
  // Two splitmix64 steps decorrelate nearby (seed, index) pairs before the
  // result becomes an engine seed.
  uint64_t state = seed;
  uint64_t mixed = splitmix64(state);
  state = mixed ^ index;
  return Rng(splitmix64(state));
}

uint64_t Rng::next_u64() {
  ++draws_;
  return engine_();
}

double Rng::uniform() {
  // Top 53 bits scaled by 2^-53.
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
  if (!(lo < hi)) {
    throw std::invalid_argument("uniform: need lo < hi, got [" +
                                std::to_string(lo) + ", " + std::to_string(hi) +
                                ")");
  }
  return lo + (hi - lo) * uniform();
}

int64_t Rng::uniform_int(int64_t lo, int64_t hi) {
  if (lo > hi) {
    throw std::invalid_argument("uniform_int: need lo <= hi, got [" +
                                std::to_string(lo) + ", " + std::to_string(hi) +
                                "]");
  }
  const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
  if (span == 0) return lo + static_cast<int64_t>(next_u64());  // full range
  // Smallest power-of-two mask covering span, then reject out-of-range draws.
  uint64_t mask = span - 1;
  mask |= mask >> 1;
  mask |= mask >> 2;
  mask |= mask >> 4;
  mask |= mask >> 8;
  mask |= mask >> 16;
  mask |= mask >> 32;
  uint64_t draw;
  do {
    draw = next_u64() & mask;
  } while (draw >= span);
  return lo + static_cast<int64_t>(draw);
}

uint64_t Rng::state_digest() const {
  uint64_t state = seed_;
  uint64_t acc = splitmix64(state);
  state = acc ^ draws_;
  return splitmix64(state);
}

}  // namespace syncap
