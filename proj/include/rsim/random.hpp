#pragma once

#include <cstdint>
#include <vector>

namespace rsim {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t mix(std::uint64_t a, std::uint64_t b) { return splitmix64(a ^ splitmix64(b)); }

constexpr std::uint64_t mix(std::uint64_t a, std::uint64_t b, std::uint64_t c) { return mix(mix(a, b), c); }

/// Labels for shared-randomness draws. Values are part of the reproducibility contract.
enum class DrawKind : std::uint64_t {
  committee_lottery = 0x6c6f74746572ULL,
  segment_hash = 0x7365676861736ULL,
  test = 0x74657374ULL,
};

/// Randomness every node sees identically. Draws are addressed by (kind, index, word), so no
/// node can observe how many draws another node made.
class SharedRandomness {
 public:
  explicit SharedRandomness(std::uint64_t master_seed) : master_seed_(master_seed) {}

  std::uint64_t master_seed() const { return master_seed_; }

  std::uint64_t word(DrawKind kind, std::uint64_t index, std::uint64_t word = 0) const {
    return mix(master_seed_ ^ static_cast<std::uint64_t>(kind), index, word);
  }

  /// Uniform in [0, 1) with 53 bits of precision.
  double uniform(DrawKind kind, std::uint64_t index) const {
    return static_cast<double>(word(kind, index) >> 11) * 0x1.0p-53;
  }

  bool bernoulli(DrawKind kind, std::uint64_t index, double p) const {
    return p >= 1.0 || uniform(kind, index) < p;
  }

  /// `width` uniformly random bits, least significant first.
  std::vector<bool> bits(DrawKind kind, std::uint64_t index, unsigned width) const;

 private:
  std::uint64_t master_seed_;
};

/// Sequential private stream of one node, derived from (master_seed, owner, counter).
class PrivateStream {
 public:
  PrivateStream() = default;
  PrivateStream(std::uint64_t master_seed, std::uint64_t owner)
      : base_(mix(master_seed, 0x707269766174ULL, owner)) {}

  std::uint64_t next() { return mix(base_, counter_++); }
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  bool bernoulli(double p) { return p >= 1.0 || (p > 0.0 && uniform() < p); }
  /// Uniform in [0, bound).
  std::uint64_t below(std::uint64_t bound) { return bound == 0 ? 0 : next() % bound; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t base_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace rsim
