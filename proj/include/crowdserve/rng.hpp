#pragma once

#include <cstdint>
#include <vector>

namespace crowdserve {

// splitmix64: tiny, seedable, identical everywhere. Used instead of
// std::uniform_* distributions, whose output differs across standard
// libraries and would break cross-run determinism guarantees.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 random bits.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform in [lo, hi).
  double next_double(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Uniform integer in [0, bound). Modulo bias is < bound/2^64, irrelevant
  // for the bounds used here, and keeps the consumption pattern fixed.
  std::uint64_t next_below(std::uint64_t bound) { return next_u64() % bound; }

  // Derives an independent stream; distinct tags give distinct streams.
  SplitMix64 fork(std::uint64_t tag) {
    return SplitMix64(next_u64() ^ (tag * 0xD2B74407B1CE6E93ull + 0x8BB84B93962EACC9ull));
  }

 private:
  std::uint64_t state_;
};

// Zipf over ranks 1..n with exponent s, sampled by inverting the CDF table.
class ZipfSampler {
 public:
  ZipfSampler(std::size_t n, double exponent);

  // Returns a 0-based rank in [0, n).
  std::size_t sample(SplitMix64& rng) const;

  std::size_t size() const { return cdf_.size(); }

 private:
  std::vector<double> cdf_;
};

}  // namespace crowdserve
