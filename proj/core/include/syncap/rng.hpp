#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace syncap {

// One splitmix64 step; advances state and returns the next value.
uint64_t splitmix64(uint64_t& state);

// Deterministic random stream. The engine is std::mt19937_64, which the
// standard pins down bit for bit; the value mappings below are hand-rolled
// because the standard distribution objects (and std::shuffle) are
// implementation-defined and would break cross-platform byte equality.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  // Independent per-sample stream, usable in any order.
  static Rng for_stream(uint64_t seed, uint64_t index);

  uint64_t next_u64();

  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  // Uniform in [lo, hi); requires lo < hi.
  double uniform(double lo, double hi);
  // Uniform integer in [lo, hi], both ends inclusive; requires lo <= hi.
  // Rejection sampling, so the result is exact and portable.
  int64_t uniform_int(int64_t lo, int64_t hi);

  // Fisher-Yates; last-to-first, partner drawn with uniform_int.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<size_t>(uniform_int(0, static_cast<int64_t>(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

  uint64_t seed() const { return seed_; }
  uint64_t draw_count() const { return draws_; }
  // Stable fingerprint of (seed, draws consumed); equal streams in equal
  // positions digest identically.
  uint64_t state_digest() const;

 private:
  std::mt19937_64 engine_;
  uint64_t seed_ = 0;
  uint64_t draws_ = 0;
};

}  // namespace syncap
