#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rsim/codec.hpp"
#include "rsim/core.hpp"

namespace rsim {

enum class CountPolicy { sent, delivered };

enum class LogLevel { off, summary, trace };

/// Reads RENAME_SIM_LOG; unset or unknown values mean `off`.
LogLevel log_level_from_env();
LogLevel parse_log_level(const std::string& s);

struct MetricCounters {
  std::uint64_t messages_total = 0;
  std::uint64_t bits_total = 0;
  std::uint64_t rounds_total = 0;
  std::uint64_t messages_delivered = 0;
  std::vector<std::uint64_t> messages_per_round;
  std::vector<std::uint64_t> committee_size_history;
  std::array<std::uint64_t, 16> messages_by_type{};
  std::array<std::uint64_t, 16> bits_by_type{};
  /// Largest single-message size in bits observed per type, for the bit-budget check.
  std::array<std::uint64_t, 16> max_bits_by_type{};

  std::uint64_t by_type(MessageType t) const { return messages_by_type[static_cast<unsigned>(t)]; }
};

struct SendTrace {
  NodeIndex sender = 0;
  std::vector<NodeIndex> receivers;
  std::vector<NodeIndex> delivered_to;
  MessageType type{};
  std::uint64_t bits_each = 0;
  std::uint64_t count = 1;
};

struct RoundEvent {
  std::uint64_t round = 0;
  std::uint64_t messages = 0;
  std::uint64_t bits = 0;
  std::vector<NodeIndex> crashed;
  std::string note;
  std::vector<SendTrace> sends;  ///< filled only at LogLevel::trace
};

struct Verdict {
  std::string lemma;
  std::uint64_t round = 0;
  bool holds = true;
  std::string witness;
};

struct NodeOutcome {
  NodeId original;
  std::optional<std::uint64_t> new_id;  ///< empty for crashed, Byzantine or undecided nodes
  bool faulty = false;
};

struct Transcript {
  std::string protocol;
  std::uint64_t n = 0;
  std::uint64_t N = 0;
  std::uint64_t seed = 0;
  std::uint64_t f_budget = 0;
  std::uint64_t f_actual = 0;
  bool success = false;
  std::string failure_cause;
  std::vector<RoundEvent> events;
  MetricCounters metrics;
  std::vector<NodeOutcome> outcome;
  std::vector<Verdict> verdicts;
  std::map<std::string, double> extra;  ///< protocol-specific observables (iterations, committee size, ...)

  std::uint64_t monitor_failures() const;
  nlohmann::json to_json() const;
  static std::string csv_header();
  std::string csv_row() const;
};

}  // namespace rsim
