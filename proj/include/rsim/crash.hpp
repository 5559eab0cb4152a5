#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "rsim/codec.hpp"
#include "rsim/core.hpp"
#include "rsim/engine.hpp"
#include "rsim/random.hpp"
#include "rsim/transcript.hpp"

namespace rsim::crash {

/// Closed interval [lo, hi] of candidate new identities; a vertex of the halving tree over [1, n].
struct Interval {
  std::uint32_t lo = 1;
  std::uint32_t hi = 1;

  std::uint32_t size() const { return hi - lo + 1; }
  bool contains(const Interval& o) const { return lo <= o.lo && o.hi <= hi; }
  friend constexpr auto operator<=>(const Interval&, const Interval&) = default;
};

/// Left child [lo, floor((lo+hi)/2)].
Interval bot(Interval I);
/// Right child [floor((lo+hi)/2) + 1, hi].
Interval top(Interval I);

/// 1-based position of x in ascending order of `set`.
std::size_t rank(NodeId x, std::span<const NodeId> set);

struct CrashNodeState {
  NodeId id;
  Interval I;
  std::uint32_t d = 0;
  std::uint32_t p = 0;
  bool elected = false;
  bool crashed = false;
};

struct StatusReport {
  NodeId id;
  Interval I;
  std::uint32_t d = 0;
  std::uint32_t p = 0;
};

using CommitteeResponse = StatusReport;

/// Wire payload for the three crash-protocol message types.
struct CrashMessage {
  MessageType kind = MessageType::elect_notify;
  StatusReport body;

  MessageType type() const { return kind; }
  std::uint64_t bits_each(const Widths& w) const;
  std::uint64_t logical_count() const { return 1; }
  friend bool operator==(const CrashMessage&, const CrashMessage&);
};

BitString encode(const CrashMessage& m, const Widths& w);
CrashMessage decode_crash(const BitString& bits, const Widths& w);

/// Intentional faults used to show the exhaustive oracle can catch broken implementations.
enum class Mutation { none, rank_off_by_one };

struct ElectionRule {
  std::uint64_t n = 0;
  /// Base election probability; the default is 256 * log2(n) / n.
  double base = 0.0;
  bool clamp = true;

  static ElectionRule standard(std::uint64_t n);
  /// min(1, base * 2^p). Throws ConfigError when clamping is disabled and the value exceeds 1.
  double probability(std::uint32_t p) const;
};

CrashNodeState init_node(NodeId id, std::uint64_t n, PrivateStream& rng, const ElectionRule& rule);

/// Responses of one committee member to its round-2 reports, in the order of `reports`.
std::vector<CommitteeResponse> committee_action(std::span<const StatusReport> reports, std::uint32_t p_self,
                                                Mutation mutation = Mutation::none);

/// Round-3 update of a node given the committee responses it received.
void node_action(std::span<const CommitteeResponse> responses, CrashNodeState& state, PrivateStream& rng,
                 const ElectionRule& rule);

std::uint32_t phase_count(std::uint64_t n);

struct CrashConfig {
  std::uint64_t n = 0;
  std::uint64_t N = 0;
  std::uint64_t seed = 0;
  ElectionRule election;
  Mutation mutation = Mutation::none;
  bool early_exit = false;  ///< decided nodes skip committee duty; they still report
  CountPolicy count_policy = CountPolicy::sent;
  LogLevel log = LogLevel::off;
  std::vector<NodeId> ids;  ///< optional explicit original ids; drawn from the seed otherwise
};

/// Distinct ids in [1, N], drawn deterministically from `seed`.
std::vector<NodeId> draw_ids(std::uint64_t n, std::uint64_t N, std::uint64_t seed);

/// What the adversary may look at before committing this round's crashes.
struct CrashObservation {
  std::uint64_t round = 0;
  std::uint32_t phase = 0;
  std::uint32_t sub_round = 0;
  std::uint64_t n = 0;
  std::span<const CrashNodeState> states;  ///< as of the end of the previous round

  struct Pending {
    NodeIndex sender;
    std::span<const NodeIndex> receivers;
    MessageType type;
  };
  /// Sends submitted this round, not yet delivered.
  std::size_t pending_count() const { return engine->submitted().size(); }
  Pending pending(std::size_t i) const {
    const auto& r = engine->submitted()[i];
    return {r.sender, engine->receivers(r), engine->payload(r).type()};
  }

  const RoundEngine<CrashMessage>* engine = nullptr;
};

struct CrashDecision {
  std::vector<NodeIndex> crash_now;
  /// Receivers that still get the crashed sender's envelopes of this round; missing key = none.
  std::vector<std::pair<NodeIndex, std::vector<NodeIndex>>> delivered_subset;
};

/// Steppable, copyable execution of the crash-resilient renaming protocol.
class CrashSim {
 public:
  using Engine = RoundEngine<CrashMessage>;

  explicit CrashSim(CrashConfig cfg);

  const CrashConfig& config() const { return cfg_; }
  std::uint64_t round() const { return engine_.round(); }
  std::uint64_t total_rounds() const { return 3ULL * phases_; }
  std::uint32_t phases() const { return phases_; }
  bool done() const { return engine_.round() >= total_rounds(); }
  std::uint32_t phase_of(std::uint64_t round) const { return round == 0 ? 0 : static_cast<std::uint32_t>((round - 1) / 3 + 1); }
  std::uint32_t sub_round_of(std::uint64_t round) const { return round == 0 ? 0 : static_cast<std::uint32_t>((round - 1) % 3 + 1); }

  const std::vector<CrashNodeState>& states() const { return states_; }
  const Engine& engine() const { return engine_; }
  Engine& engine() { return engine_; }
  std::uint64_t crashes() const { return crashes_; }

  /// Starts the next round and collects every live node's sends.
  void begin_round();
  CrashObservation observe() const;
  /// Applies the adversary's decision, delivers and runs the receive step.
  void finish_round(const CrashDecision& decision);

  /// New identity of each node that survived (the single value of its interval), or empty.
  std::vector<NodeOutcome> outcome() const;

  /// Everything that influences later rounds, serialized; equal keys mean equal futures when
  /// private randomness is not consumed (all election probabilities are 1).
  std::string state_key() const;

 private:
  void receive_notifications();
  void receive_reports();
  void receive_responses();

  CrashConfig cfg_;
  std::uint32_t phases_;
  Engine engine_;
  std::vector<CrashNodeState> states_;
  std::vector<PrivateStream> rng_;
  std::vector<std::vector<NodeIndex>> notifiers_;
  std::vector<std::vector<std::uint32_t>> reports_;  ///< round-2 record indices per member
  std::vector<StatusReport> round2_;
  std::vector<NodeIndex> report_sender_;
  std::map<std::vector<std::uint32_t>, std::vector<CommitteeResponse>> memo_;
  std::vector<NodeIndex> to_;
  std::vector<CrashMessage> batch_;
  std::uint64_t crashes_ = 0;
};

}  // namespace rsim::crash
