#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "rsim/byz.hpp"
#include "rsim/byz_adversary.hpp"
#include "rsim/transcript.hpp"

namespace rsim::byz {

struct ByzRunConfig {
  std::uint64_t n = 0;
  std::uint64_t N = 0;
  std::uint64_t seed = 0;
  double epsilon0 = 0.05;
  std::optional<double> p0;
  bool clamp = true;
  std::uint64_t f = 0;            ///< size of the static Byzantine coalition
  std::vector<NodeId> ids;        ///< drawn from the seed when empty
  std::vector<NodeIndex> coalition;  ///< drawn from the seed when empty and f > 0
  CountPolicy count_policy = CountPolicy::sent;
  LogLevel log = LogLevel::off;
};

/// Runs Byzantine-resilient renaming against `adversary` and checks the invariants against
/// simulator-side ground truth. Extra observables: iterations, committee sizes, list
/// divergence after announcement, hash collisions, timeouts.
Transcript run_byzantine(const ByzRunConfig& cfg, ByzAdversary& adversary);

/// While-loop message types (validator, diff reports, consensus).
std::uint64_t loop_messages(const MetricCounters& m);
/// Identity announcements plus NEW distribution.
std::uint64_t announce_messages(const MetricCounters& m);

}  // namespace rsim::byz
