#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "rsim/crash.hpp"
#include "rsim/transcript.hpp"

namespace rsim {

/// New ids of correct nodes are pairwise distinct and within [1, n]. Faulty entries are ignored;
/// a correct node without an id fails.
Verdict check_unique_strong(std::span<const NodeOutcome> outcome, std::uint64_t n);

/// For correct u, v: id(u) < id(v) implies nid(u) < nid(v).
Verdict check_order_preserving(std::span<const NodeOutcome> outcome);

namespace lemma {
inline constexpr const char* no_crash_increasing_height = "no-crash-increasing-height";
inline constexpr const char* processor_less_interval = "processor-less-interval";
inline constexpr const char* crash_rebuild_committee = "crash-rebuild-committee";
inline constexpr const char* bounded_difference_k = "bounded-difference-k";
inline constexpr const char* crash_termination = "crash-termination";
inline constexpr const char* crash_monotonicity = "crash-monotonicity";
inline constexpr const char* crash_message_cap = "crash-message-cap";
inline constexpr const char* unique_strong = "unique-strong";
inline constexpr const char* order_preserving = "order-preserving";
inline constexpr const char* byz_view_containment = "byz-view-containment";
inline constexpr const char* byz_lockstep = "byz-lockstep-partition";
inline constexpr const char* byz_iteration_bound = "byz-iteration-bound";
inline constexpr const char* byz_validator_contract = "byz-validator-contract";
inline constexpr const char* byz_consensus_contract = "byz-consensus-contract";
inline constexpr const char* byz_count_consensus = "byz-count-consensus";
inline constexpr const char* committee_announcement = "committee-announcement";
}  // namespace lemma

/// Every deterministic claim that must have exactly one monitor.
const std::vector<std::string>& deterministic_lemma_manifest();
/// Statistical claims, tallied across seeds rather than asserted per trial.
const std::vector<std::string>& probabilistic_lemma_manifest();
/// Tags implemented by the monitors in this library.
const std::set<std::string>& monitor_registry();
/// Throws MonitorViolation naming any manifest entry without a monitor (or duplicated).
void check_manifest_complete();

/// Messages per n^2 * ceil(log2 n) that the crash protocol can never exceed: every node sends
/// at most one message per link in each of its 9 ceil(log2 n) rounds.
inline constexpr double kCrashMessageCap = 9.0;

/// Watches ground-truth crash states round by round and records lemma verdicts. Only failures
/// are kept per checkpoint; `finish` adds one summary verdict per lemma.
class CrashMonitor {
 public:
  explicit CrashMonitor(std::uint64_t n);

  void start(const std::vector<crash::CrashNodeState>& states);
  /// Call after every round of the protocol (the round number decides the sub-round).
  void after_round(std::uint64_t round, const std::vector<crash::CrashNodeState>& states);
  /// Termination, uniqueness and the message cap.
  void finish(const std::vector<crash::CrashNodeState>& states, std::span<const NodeOutcome> outcome,
              std::uint64_t messages_total);

  const std::vector<Verdict>& verdicts() const { return verdicts_; }
  std::uint64_t failures() const;
  /// Phases in which the min p over live nodes went up; lets tests see the rebuild path taken.
  std::uint64_t rebuild_phases() const { return rebuild_phases_; }

 private:
  void fail(const char* tag, std::uint64_t round, std::string witness);
  void check_occupancy(std::uint64_t round, const std::vector<crash::CrashNodeState>& states);
  void phase_end(std::uint64_t round, const std::vector<crash::CrashNodeState>& states);

  std::uint64_t n_;
  unsigned log_n_;
  std::vector<crash::CrashNodeState> prev_;
  std::map<std::string, std::uint64_t> checks_;
  std::map<std::string, std::uint64_t> fails_;
  std::vector<Verdict> verdicts_;
  // phase bookkeeping (values at the previous phase end)
  std::optional<std::uint32_t> prev_min_depth_;
  std::uint32_t prev_min_p_ = 0;
  bool prev_no_committee_ = false;
  std::vector<NodeIndex> members_at_start_;
  std::uint64_t rebuild_phases_ = 0;
};

}  // namespace rsim
