#include "rsim/crash_adversary.hpp"

#include <algorithm>
#include <map>
#include <set>

namespace rsim::crash {

void CrashAdversary::charge(CrashDecision& d, NodeIndex v, std::vector<NodeIndex> delivered) {
  if (spent_ >= budget_) return;
  ++spent_;
  d.crash_now.push_back(v);
  d.delivered_subset.emplace_back(v, std::move(delivered));
}

std::vector<NodeIndex> CrashAdversary::all_receivers(const CrashObservation& obs, NodeIndex v) const {
  std::set<NodeIndex> to;
  for (std::size_t i = 0; i < obs.pending_count(); ++i) {
    const auto p = obs.pending(i);
    if (p.sender == v) to.insert(p.receivers.begin(), p.receivers.end());
  }
  return {to.begin(), to.end()};
}

std::vector<NodeIndex> CrashAdversary::random_subset(const CrashObservation& obs, NodeIndex v) {
  std::vector<NodeIndex> out;
  for (auto r : all_receivers(obs, v)) {
    if (rng_.bernoulli(0.5)) out.push_back(r);
  }
  return out;
}

std::vector<NodeIndex> CrashAdversary::live_nodes(const CrashObservation& obs, const CrashDecision& pending) const {
  std::vector<NodeIndex> out;
  for (NodeIndex v = 0; v < obs.n; ++v) {
    if (obs.states[v].crashed) continue;
    if (std::find(pending.crash_now.begin(), pending.crash_now.end(), v) != pending.crash_now.end()) continue;
    out.push_back(v);
  }
  return out;
}

namespace {

class NoCrashes final : public CrashAdversary {
 public:
  using CrashAdversary::CrashAdversary;
  std::string name() const override { return "none"; }
  CrashDecision decide(const CrashObservation&) override { return {}; }
};

/// f crash times drawn uniformly over the protocol's rounds; each hits a uniform live node mid-send.
class UniformRandom final : public CrashAdversary {
 public:
  using CrashAdversary::CrashAdversary;
  std::string name() const override { return "uniform_random"; }

  CrashDecision decide(const CrashObservation& obs) override {
    if (!scheduled_) {
      const std::uint64_t rounds = 9ULL * ceil_log2(obs.n);
      for (std::uint64_t i = 0; i < budget_; ++i) ++at_round_[1 + rng_.below(rounds)];
      scheduled_ = true;
    }
    CrashDecision d;
    auto it = at_round_.find(obs.round);
    if (it == at_round_.end()) return d;
    for (std::uint64_t k = 0; k < it->second; ++k) {
      auto live = live_nodes(obs, d);
      if (live.size() <= 1) break;
      const NodeIndex v = live[rng_.below(live.size())];
      charge(d, v, random_subset(obs, v));
    }
    return d;
  }

 private:
  bool scheduled_ = false;
  std::map<std::uint64_t, std::uint64_t> at_round_;
};

std::vector<NodeIndex> senders_of(const CrashObservation& obs, MessageType t) {
  std::set<NodeIndex> s;
  for (std::size_t i = 0; i < obs.pending_count(); ++i) {
    const auto p = obs.pending(i);
    if (p.type == t) s.insert(p.sender);
  }
  return {s.begin(), s.end()};
}

/// Lets each committee announcement go out, then kills the whole committee, while the budget
/// covers a complete wipe. Once it does not, the rest goes to random non-members.
class CommitteeAssassin final : public CrashAdversary {
 public:
  using CrashAdversary::CrashAdversary;
  std::string name() const override { return "committee_assassin"; }

  CrashDecision decide(const CrashObservation& obs) override {
    CrashDecision d;
    if (obs.sub_round != 1 || remaining() == 0) return d;
    auto members = senders_of(obs, MessageType::elect_notify);
    if (members.empty()) return d;
    if (!leftover_mode_ && remaining() >= members.size()) {
      for (auto v : members) charge(d, v, all_receivers(obs, v));
      return d;
    }
    leftover_mode_ = true;
    std::vector<NodeIndex> others, inside;
    for (auto v : live_nodes(obs, d)) {
      (std::binary_search(members.begin(), members.end(), v) ? inside : others).push_back(v);
    }
    // with no non-members left, the leftover still has to land somewhere; keep one node alive
    auto& pool = others.empty() ? inside : others;
    while (remaining() > 0 && !pool.empty() && live_nodes(obs, d).size() > 1) {
      const auto k = rng_.below(pool.size());
      const NodeIndex v = pool[k];
      pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(k));
      charge(d, v, all_receivers(obs, v));
    }
    return d;
  }

 private:
  bool leftover_mode_ = false;
};

/// Kills the committee while its responses are in flight, delivering them to one random half
/// of the nodes only, so the other half raises p and the views split.
class RebuildForcer final : public CrashAdversary {
 public:
  using CrashAdversary::CrashAdversary;
  std::string name() const override { return "rebuild_forcer"; }

  CrashDecision decide(const CrashObservation& obs) override {
    CrashDecision d;
    if (obs.sub_round != 3 || remaining() == 0) return d;
    auto members = senders_of(obs, MessageType::committee_response);
    if (members.empty()) return d;
    std::vector<bool> lucky(obs.n);
    for (NodeIndex v = 0; v < obs.n; ++v) lucky[v] = rng_.bernoulli(0.5);
    auto half_of = [&](NodeIndex v) {
      std::vector<NodeIndex> out;
      for (auto r : all_receivers(obs, v)) {
        if (lucky[r]) out.push_back(r);
      }
      return out;
    };
    if (remaining() >= members.size() && live_nodes(obs, d).size() > members.size()) {
      for (auto v : members) charge(d, v, half_of(v));
      return d;
    }
    // cannot afford a wipe: one mid-send crash per phase keeps the p spread alive longer
    const NodeIndex v = members[rng_.below(members.size())];
    if (live_nodes(obs, d).size() > 1) charge(d, v, half_of(v));
    return d;
  }
};

std::map<std::string, CrashAdversaryFactory>& registry() {
  static std::map<std::string, CrashAdversaryFactory> r = [] {
    std::map<std::string, CrashAdversaryFactory> m;
    m["none"] = [](std::uint64_t, std::uint64_t s, const nlohmann::json&) { return std::make_unique<NoCrashes>(0, s); };
    m["uniform_random"] = [](std::uint64_t f, std::uint64_t s, const nlohmann::json&) {
      return std::make_unique<UniformRandom>(f, s);
    };
    m["committee_assassin"] = [](std::uint64_t f, std::uint64_t s, const nlohmann::json&) {
      return std::make_unique<CommitteeAssassin>(f, s);
    };
    m["rebuild_forcer"] = [](std::uint64_t f, std::uint64_t s, const nlohmann::json&) {
      return std::make_unique<RebuildForcer>(f, s);
    };
    return m;
  }();
  return r;
}

}  // namespace

std::unique_ptr<CrashAdversary> make_crash_adversary(const std::string& name, std::uint64_t budget, std::uint64_t seed,
                                                     const nlohmann::json& params) {
  auto it = registry().find(name);
  if (it == registry().end()) throw ConfigError("unknown crash adversary '" + name + "'");
  return it->second(budget, seed, params);
}

void register_crash_adversary(const std::string& name, CrashAdversaryFactory factory) {
  registry()[name] = std::move(factory);
}

std::vector<std::string> crash_adversary_names() {
  std::vector<std::string> out;
  for (const auto& [k, v] : registry()) out.push_back(k);
  return out;
}

}  // namespace rsim::crash
