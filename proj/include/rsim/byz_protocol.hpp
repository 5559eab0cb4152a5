#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rsim/byz.hpp"

namespace rsim::byz {

/// One accepted message as seen by a receiver.
struct Mail {
  NodeIndex sender;
  const ByzMessage* msg;
};

/// Single-valued votes of one round. A sender that delivers more than one message of the kind
/// to a receiver in the same round is ignored by that receiver.
template <class V>
class VoteTally {
 public:
  using Counts = std::map<V, std::uint32_t>;

  /// Votes every correct member receives identically.
  void set_shared(std::span<const std::pair<NodeIndex, V>> votes) {
    shared_.clear();
    by_sender_.clear();
    std::map<NodeIndex, std::optional<V>> first;
    for (const auto& [s, v] : votes) {
      auto [it, fresh] = first.try_emplace(s, v);
      if (!fresh) it->second.reset();
    }
    for (const auto& [s, v] : first) {
      by_sender_.emplace(s, v);
      if (v) ++shared_[*v];
    }
  }

  /// Counts at one receiver, given its private votes.
  Counts at(std::span<const std::pair<NodeIndex, V>> own) const {
    Counts c = shared_;
    if (own.empty()) return c;
    std::map<NodeIndex, std::optional<V>> first;
    for (const auto& [s, v] : own) {
      auto [it, fresh] = first.try_emplace(s, v);
      if (!fresh) it->second.reset();
    }
    for (const auto& [s, v] : first) {
      auto sh = by_sender_.find(s);
      if (sh != by_sender_.end()) {
        // Same sender also reached this receiver through the shared channel.
        if (sh->second) {
          auto it = c.find(*sh->second);
          if (--it->second == 0) c.erase(it);
        }
        continue;
      }
      if (v) ++c[*v];
    }
    return c;
  }

 private:
  Counts shared_;
  std::map<NodeIndex, std::optional<V>> by_sender_;
};

/// ECHO decision after the INIT round: the most frequent value if it appears at least c_g times.
std::optional<Fingerprint> validator_echo(const std::map<Fingerprint, std::uint32_t>& init_counts, double c_g);

struct ValidatorResult {
  bool same = false;
  Fingerprint out;
};

ValidatorResult validator_decide(const Fingerprint& in, const std::map<Fingerprint, std::uint32_t>& echo_counts,
                                 double c_g);

struct ConsensusConfig {
  std::uint32_t n = 0;           ///< node indices are below n
  double c_g = 0.0;
  std::uint64_t faults = 0;      ///< t
  std::uint64_t phases = 0;      ///< t + 2

  static ConsensusConfig from(const ByzParams& p);
  std::uint64_t rounds() const { return 2 * phases; }
};

/// Slot of a broadcast: (broadcaster node index, label).
constexpr std::uint32_t slot_of(NodeIndex p, ConsensusLabel l) { return 2 * p + static_cast<std::uint32_t>(l); }
constexpr NodeIndex slot_owner(std::uint32_t slot) { return slot / 2; }
constexpr ConsensusLabel slot_label(std::uint32_t slot) { return static_cast<ConsensusLabel>(slot & 1U); }

/// Echo sets built from the messages every correct member receives identically.
class ConsensusShared {
 public:
  explicit ConsensusShared(const ConsensusConfig& cfg);

  void begin_round();
  void add(NodeIndex sender, const ByzMessage& m);

  std::uint32_t count(std::uint32_t slot) const { return count_[slot]; }
  bool has(std::uint32_t slot, NodeIndex sender) const {
    return (bits_[slot * words_ + (sender >> 6)] >> (sender & 63)) & 1ULL;
  }
  bool init_now(std::uint32_t slot) const { return init_flag_[slot] != 0; }
  std::span<const std::uint32_t> touched() const { return touched_; }
  /// Serialized echo sets; equal keys mean equal future behaviour.
  std::string state_key() const;

 private:
  void touch(std::uint32_t slot);

  std::uint32_t words_;
  std::vector<std::uint64_t> bits_;
  std::vector<std::uint32_t> count_;
  std::vector<std::uint8_t> init_flag_;
  std::vector<std::uint8_t> touched_flag_;
  std::vector<std::uint32_t> touched_;
};

/// One correct member's side of the binary consensus. Every (broadcaster, label) pair runs an
/// echo broadcast: echo on INIT or on more than c_g/2 echoes, accept at c_g echoes. A member
/// accepts 1 at the end of phase k once it accepted at least t+1 INPUT broadcasts and k-1
/// SUPPORT broadcasts, then broadcasts SUPPORT; the output is 1 iff it accepted by phase t+2.
class ConsensusNode {
 public:
  ConsensusNode(const ConsensusConfig& cfg, bool input);

  struct Sends {
    std::optional<ConsensusLabel> init;
    std::vector<std::uint32_t> echoes;
  };
  /// Messages for round r (1-based within the instance).
  Sends sends(std::uint64_t r);
  /// Receive step of round r; `own` holds this member's non-shared consensus messages.
  void receive(std::uint64_t r, const ConsensusShared& shared, std::span<const Mail> own);

  bool input() const { return input_; }
  bool output() const { return accepted_one_; }
  std::uint64_t accepted_inputs() const { return accepted_input_; }
  std::uint64_t accepted_supports() const { return accepted_support_; }
  /// Serialized state between rounds, independent of the order private echoes arrived in.
  std::string state_key() const;

 private:
  std::uint32_t count(std::uint32_t slot, const ConsensusShared& shared) const;
  void evaluate(std::uint32_t slot, bool init, const ConsensusShared& shared);

  const ConsensusConfig* cfg_;
  bool input_;
  bool accepted_one_ = false;
  bool support_due_ = false;
  std::uint64_t accepted_input_ = 0;
  std::uint64_t accepted_support_ = 0;
  std::vector<std::uint8_t> echoed_;
  std::vector<std::uint8_t> accepted_;
  // Private echoes as per-slot linked lists: head_[slot] indexes into extra_ (-1 = none).
  struct Extra {
    NodeIndex sender;
    std::int32_t next;
  };
  std::vector<std::int32_t> head_;
  std::vector<Extra> extra_;
  std::vector<std::uint64_t> seen_;  ///< (slot, sender) bitmap of extra_, allocated on first use
  std::vector<std::uint32_t> pending_;
  std::vector<std::uint32_t> own_slots_;
  std::vector<std::uint32_t> own_inits_;
};

}  // namespace rsim::byz
