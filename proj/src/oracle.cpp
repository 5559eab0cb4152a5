#include "rsim/oracle.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

#include "rsim/monitors.hpp"

namespace rsim {

namespace {

struct Search {
  std::uint64_t n;
  OracleOptions opt;
  OracleReport report;
  std::unordered_set<std::string> visited;
  std::vector<std::string> schedule;

  bool stop() const { return opt.stop_at_first && report.violations > 0; }

  void check_leaf(const crash::CrashSim& sim) {
    ++report.executions;
    std::string problem;
    for (const auto& s : sim.states()) {
      if (!s.crashed && s.I.size() != 1) {
        problem = "node " + std::to_string(s.id.value) + " did not terminate";
        break;
      }
    }
    if (problem.empty()) {
      auto out = sim.outcome();
      auto v = check_unique_strong(out, n);
      if (!v.holds) problem = v.witness;
    }
    if (problem.empty()) return;
    ++report.violations;
    report.holds = false;
    if (report.witness.empty()) {
      std::ostringstream os;
      os << problem << " after ";
      bool any = false;
      for (const auto& step : schedule) {
        if (step.empty()) continue;
        os << (any ? "; " : "") << step;
        any = true;
      }
      if (!any) os << "no crashes";
      report.witness = os.str();
    }
  }

  void explore(const crash::CrashSim& at) {
    if (stop()) return;
    if (at.done()) {
      check_leaf(at);
      return;
    }
    if (!visited.insert(at.state_key()).second) return;
    if (++report.states > opt.state_cap) {
      throw BudgetExceeded("oracle state cap " + std::to_string(opt.state_cap) + " exceeded at n=" + std::to_string(n));
    }
    crash::CrashSim base = at;
    base.begin_round();
    const auto obs = base.observe();
    // nodes with something in flight, and the other live receivers of their sends
    std::vector<NodeIndex> senders;
    std::vector<std::vector<NodeIndex>> targets(n);
    for (std::size_t i = 0; i < obs.pending_count(); ++i) {
      const auto p = obs.pending(i);
      senders.push_back(p.sender);
      for (auto r : p.receivers) {
        if (r != p.sender) targets[p.sender].push_back(r);
      }
    }
    std::sort(senders.begin(), senders.end());
    senders.erase(std::unique(senders.begin(), senders.end()), senders.end());
    for (auto& t : targets) {
      std::sort(t.begin(), t.end());
      t.erase(std::unique(t.begin(), t.end()), t.end());
    }
    const std::uint64_t budget_left = (n - 1) - at.crashes();
    const std::uint32_t k = static_cast<std::uint32_t>(senders.size());
    for (std::uint32_t mask = 0; mask < (1u << k); ++mask) {
      const auto victims = static_cast<std::uint64_t>(std::popcount(mask));
      if (victims > budget_left) continue;
      std::vector<NodeIndex> chosen;
      for (std::uint32_t b = 0; b < k; ++b) {
        if (mask >> b & 1u) chosen.push_back(senders[b]);
      }
      branch_subsets(base, chosen, 0, crash::CrashDecision{.crash_now = chosen, .delivered_subset = {}}, targets);
      if (stop()) return;
    }
  }

  // Chooses the delivered subset of chosen[i..]; receivers that crash this round don't matter.
  void branch_subsets(const crash::CrashSim& base, const std::vector<NodeIndex>& chosen, std::size_t i,
                      crash::CrashDecision decision, const std::vector<std::vector<NodeIndex>>& targets) {
    if (stop()) return;
    if (i == chosen.size()) {
      crash::CrashSim next = base;
      next.finish_round(decision);
      std::ostringstream os;
      if (!decision.delivered_subset.empty()) os << "r" << base.round();
      for (const auto& [v, to] : decision.delivered_subset) {
        os << " crash " << base.states()[v].id.value << "->{";
        for (std::size_t j = 0; j < to.size(); ++j) os << (j ? "," : "") << base.states()[to[j]].id.value;
        os << "}";
      }
      schedule.push_back(os.str());
      explore(next);
      schedule.pop_back();
      return;
    }
    const NodeIndex v = chosen[i];
    std::vector<NodeIndex> reach;
    for (auto r : targets[v]) {
      if (std::find(chosen.begin(), chosen.end(), r) == chosen.end()) reach.push_back(r);
    }
    for (std::uint32_t sub = 0; sub < (1u << reach.size()); ++sub) {
      std::vector<NodeIndex> to;
      for (std::uint32_t b = 0; b < reach.size(); ++b) {
        if (sub >> b & 1u) to.push_back(reach[b]);
      }
      auto d = decision;
      d.delivered_subset.emplace_back(v, std::move(to));
      branch_subsets(base, chosen, i + 1, std::move(d), targets);
      if (stop()) return;
    }
  }
};

}  // namespace

OracleReport exhaustive_crash_oracle(std::uint64_t n, const OracleOptions& opt) {
  if (n < 2 || n > 6) throw ConfigError("oracle supports 2 <= n <= 6");
  crash::CrashConfig cfg;
  cfg.n = n;
  cfg.N = 16;  // a namespace this small would not fit the report fields in the per-type bit budget
  cfg.seed = 0;
  cfg.mutation = opt.mutation;
  cfg.election = crash::ElectionRule::standard(n);
  // with p = 1 for every exponent the protocol is deterministic given the crash schedule
  if (cfg.election.probability(0) < 1.0) throw ConfigError("oracle needs election probability 1");
  for (std::uint64_t i = 1; i <= n; ++i) cfg.ids.push_back(NodeId{i});
  Search s{n, opt, {}, {}, {}};
  crash::CrashSim root(cfg);
  s.explore(root);
  return s.report;
}

}  // namespace rsim
