#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <vector>

#include <gmpxx.h>

#include "rsim/codec.hpp"
#include "rsim/core.hpp"
#include "rsim/random.hpp"

namespace rsim::byz {

struct ByzParams {
  std::uint64_t n = 0;
  std::uint64_t N = 0;
  double epsilon0 = 0.05;
  double p0 = 1.0;        ///< committee lottery probability
  double c_g = 0.0;       ///< lower bound on correct committee members; the strong threshold
  double c_hat_g = 0.0;   ///< upper bound on correct committee members
  std::uint64_t f_bound = 0;

  /// p0 = min(1, 8 log2 n / ((1 - 3 eps) eps^2 n)) unless overridden; throws ConfigError when
  /// clamping is off and the formula exceeds 1.
  static ByzParams make(std::uint64_t n, std::uint64_t N, double epsilon0, std::optional<double> p0_override = {},
                        bool clamp = true);

  /// Largest Byzantine committee size the thresholds tolerate: ceil(c_g / 2) - 1.
  std::uint64_t consensus_faults() const;
  /// Phases of the binary consensus (each two rounds).
  std::uint64_t consensus_phases() const { return consensus_faults() + 2; }
  std::uint64_t consensus_rounds() const { return 2 * consensus_phases(); }
};

/// Closed interval of positions in [1, N].
struct Segment {
  std::uint32_t lo = 1;
  std::uint32_t hi = 1;

  std::uint32_t size() const { return hi - lo + 1; }
  bool contains(std::uint64_t i) const { return lo <= i && i <= hi; }
  friend constexpr auto operator<=>(const Segment&, const Segment&) = default;
};

Segment bot(Segment s);
Segment top(Segment s);

/// N-bit identity list, positions 1..N.
class IdentityList {
 public:
  IdentityList() = default;
  explicit IdentityList(std::uint64_t N) : N_(N), words_((N + 64) / 64, 0) {}

  std::uint64_t size() const { return N_; }
  bool get(std::uint64_t i) const { return (words_[i >> 6] >> (i & 63)) & 1ULL; }
  void set(std::uint64_t i, bool v);
  std::uint64_t count(Segment s) const;
  /// Clears s and sets its first `ones` positions.
  void fill_leftmost(Segment s, std::uint64_t ones);
  bool equal_on(const IdentityList& other, Segment s) const;
  std::vector<std::uint32_t> ones(Segment s) const;
  /// Number of ones at positions <= i.
  std::uint64_t rank(std::uint64_t i) const;

  friend bool operator==(const IdentityList&, const IdentityList&) = default;

 private:
  std::uint64_t N_ = 0;
  std::vector<std::uint64_t> words_;  ///< bit i lives in word i/64 (bit 0 unused)
};

/// Prefix popcounts for O(1) rank queries on a fixed list.
class RankIndex {
 public:
  explicit RankIndex(const IdentityList& L);
  std::uint64_t rank(std::uint64_t i) const;

 private:
  const IdentityList* list_;
  std::vector<std::uint64_t> block_;  ///< ones strictly before each 64-bit word
};

struct Fingerprint {
  std::array<std::uint64_t, 3> hash{};  ///< little-endian limbs
  std::uint64_t count = 0;

  friend constexpr auto operator<=>(const Fingerprint&, const Fingerprint&) = default;
};

/// Seeded polynomial fingerprint of list segments: h(S) = a + sum_{i in S} x^i mod P for a prime
/// P of at most 8 ceil(log2 N) bits and at least N^8 (see `prime`), with (x, a) drawn per
/// iteration from shared randomness. Distinct segments collide with probability <= N / P.
class SegmentHasher {
 public:
  SegmentHasher(std::uint64_t N, const SharedRandomness& shared);

  unsigned width() const { return width_; }
  const mpz_class& prime() const { return prime_; }
  Fingerprint hash(std::uint64_t iteration, const IdentityList& L, Segment s) const;
  /// Hash of an explicit set of one-positions (used by adversaries and tests).
  Fingerprint hash_positions(std::uint64_t iteration, const std::vector<std::uint32_t>& ones) const;

 private:
  struct Point {
    std::vector<mpz_class> pow2;  ///< x^(2^k)
    mpz_class shift;
  };
  const Point& point(std::uint64_t iteration) const;

  std::uint64_t N_;
  unsigned width_;
  mpz_class prime_;
  const SharedRandomness* shared_;
  mutable std::map<std::uint64_t, Point> points_;
};

enum class ConsensusKind : std::uint8_t { init = 0, echo = 1 };
enum class ConsensusLabel : std::uint8_t { input = 0, support = 1 };

/// Payload of every Byzantine-protocol message type.
struct ByzMessage {
  MessageType kind = MessageType::elect;
  NodeId id;                  ///< ELECT, ID_ANNOUNCE
  Fingerprint value;          ///< VAL_INIT, VAL_ECHO
  bool bit = false;           ///< DIFF_REPORT
  std::optional<std::uint64_t> new_id;  ///< NEW (empty = null)
  ConsensusKind ckind = ConsensusKind::init;
  ConsensusLabel label = ConsensusLabel::input;
  /// CONSENSUS_MSG echoes: one logical message per (subject node index, label) slot. Subjects
  /// are written on the wire as original ids.
  std::shared_ptr<const std::vector<std::uint32_t>> slots;

  MessageType type() const { return kind; }
  std::uint64_t bits_each(const Widths& w) const;
  std::uint64_t logical_count() const;
};

ByzMessage make_elect(NodeId id);
ByzMessage make_id(NodeId id);
ByzMessage make_val(MessageType kind, const Fingerprint& f);
ByzMessage make_diff(bool bit);
ByzMessage make_new(std::optional<std::uint64_t> nid);
ByzMessage make_cons_init(ConsensusLabel label);
ByzMessage make_cons_echo(std::vector<std::uint32_t> slots);

/// Canonical encoding of one logical message. For an echo batch, `which` picks the slot and
/// `subject_id` maps a node index to its original id.
BitString encode(const ByzMessage& m, const Widths& w, std::size_t which = 0, NodeId subject = {});

struct DecodedByz {
  MessageType kind;
  NodeId id;
  Fingerprint value;
  bool bit = false;
  std::optional<std::uint64_t> new_id;
  ConsensusKind ckind = ConsensusKind::init;
  ConsensusLabel label = ConsensusLabel::input;
};
DecodedByz decode_byz(const BitString& bits, const Widths& w);

}  // namespace rsim::byz
