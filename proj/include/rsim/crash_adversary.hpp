#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rsim/crash.hpp"
#include "rsim/random.hpp"

namespace rsim::crash {

/// Adaptive crash strategy. Sees only a CrashObservation; budget accounting is its own and is
/// re-checked by the trial runner.
class CrashAdversary {
 public:
  CrashAdversary(std::uint64_t budget, std::uint64_t seed) : budget_(budget), rng_(seed, 0x6576650aULL) {}
  virtual ~CrashAdversary() = default;

  virtual std::string name() const = 0;
  virtual CrashDecision decide(const CrashObservation& obs) = 0;

  std::uint64_t budget() const { return budget_; }
  std::uint64_t spent() const { return spent_; }
  std::uint64_t remaining() const { return budget_ - spent_; }

 protected:
  /// Crashes `v` with the given delivered subset and charges the budget.
  void charge(CrashDecision& d, NodeIndex v, std::vector<NodeIndex> delivered);
  /// Each pending receiver of v's sends this round, kept with probability 1/2.
  std::vector<NodeIndex> random_subset(const CrashObservation& obs, NodeIndex v);
  std::vector<NodeIndex> all_receivers(const CrashObservation& obs, NodeIndex v) const;
  std::vector<NodeIndex> live_nodes(const CrashObservation& obs, const CrashDecision& pending) const;

  std::uint64_t budget_;
  std::uint64_t spent_ = 0;
  PrivateStream rng_;
};

using CrashAdversaryFactory =
    std::function<std::unique_ptr<CrashAdversary>(std::uint64_t budget, std::uint64_t seed, const nlohmann::json& params)>;

/// Built-ins: none, uniform_random, committee_assassin, rebuild_forcer.
std::unique_ptr<CrashAdversary> make_crash_adversary(const std::string& name, std::uint64_t budget, std::uint64_t seed,
                                                     const nlohmann::json& params = nlohmann::json::object());
void register_crash_adversary(const std::string& name, CrashAdversaryFactory factory);
std::vector<std::string> crash_adversary_names();

}  // namespace rsim::crash
