#pragma once

#include <cstdint>
#include <random>

namespace nqsched {

inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

/// Seeded stream of random variates. Every stochastic operation takes one of
/// these explicitly; there is no global RNG state. Substreams derived from
/// the same master seed are stable regardless of execution order, so
/// parallel consumers get reproducible, non-overlapping sequences.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : seed_(seed), gen_(splitmix64(seed)) {}

  /// Independent stream keyed by (master seed, index).
  RngStream substream(std::uint64_t index) const {
    return RngStream(splitmix64(seed_ ^ splitmix64(index + 0x51a2b3c4d5e6f708ull)));
  }

  double normal() { return normal_(gen_); }
  double normal(double stddev) { return stddev * normal_(gen_); }
  double uniform() { return uniform_(gen_); }
  std::uint64_t next_u64() { return gen_(); }

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 gen_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace nqsched
