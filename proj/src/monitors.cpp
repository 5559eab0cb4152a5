#include "rsim/monitors.hpp"

#include <algorithm>
#include <sstream>

namespace rsim {

Verdict check_unique_strong(std::span<const NodeOutcome> outcome, std::uint64_t n) {
  Verdict v{lemma::unique_strong, 0, true, ""};
  std::map<std::uint64_t, std::uint64_t> owner;
  for (const auto& o : outcome) {
    if (o.faulty) continue;
    if (!o.new_id) {
      v.holds = false;
      v.witness = "node " + std::to_string(o.original.value) + " has no new id";
      return v;
    }
    const auto x = *o.new_id;
    if (x < 1 || x > n) {
      v.holds = false;
      v.witness = "node " + std::to_string(o.original.value) + " got " + std::to_string(x) + " outside [1," +
                  std::to_string(n) + "]";
      return v;
    }
    auto [it, fresh] = owner.emplace(x, o.original.value);
    if (!fresh) {
      v.holds = false;
      v.witness = "nodes " + std::to_string(it->second) + " and " + std::to_string(o.original.value) +
                  " both got " + std::to_string(x);
      return v;
    }
  }
  return v;
}

Verdict check_order_preserving(std::span<const NodeOutcome> outcome) {
  Verdict v{lemma::order_preserving, 0, true, ""};
  std::vector<std::pair<std::uint64_t, std::uint64_t>> pairs;
  for (const auto& o : outcome) {
    if (o.faulty || !o.new_id) continue;
    pairs.emplace_back(o.original.value, *o.new_id);
  }
  std::sort(pairs.begin(), pairs.end());
  for (std::size_t i = 1; i < pairs.size(); ++i) {
    if (pairs[i - 1].second >= pairs[i].second) {
      v.holds = false;
      v.witness = "ids " + std::to_string(pairs[i - 1].first) + " < " + std::to_string(pairs[i].first) +
                  " but new ids " + std::to_string(pairs[i - 1].second) + " >= " + std::to_string(pairs[i].second);
      return v;
    }
  }
  return v;
}

const std::vector<std::string>& deterministic_lemma_manifest() {
  static const std::vector<std::string> m{
      lemma::no_crash_increasing_height, lemma::processor_less_interval, lemma::crash_rebuild_committee,
      lemma::bounded_difference_k,       lemma::crash_termination,       lemma::crash_monotonicity,
      lemma::crash_message_cap,          lemma::unique_strong,           lemma::order_preserving,
      lemma::byz_view_containment,       lemma::byz_lockstep,            lemma::byz_iteration_bound,
      lemma::byz_validator_contract,     lemma::byz_consensus_contract,  lemma::byz_count_consensus,
  };
  return m;
}

const std::vector<std::string>& probabilistic_lemma_manifest() {
  static const std::vector<std::string> m{lemma::committee_announcement};
  return m;
}

const std::set<std::string>& monitor_registry() {
  static const std::set<std::string> r{
      lemma::no_crash_increasing_height, lemma::processor_less_interval, lemma::crash_rebuild_committee,
      lemma::bounded_difference_k,       lemma::crash_termination,       lemma::crash_monotonicity,
      lemma::crash_message_cap,          lemma::unique_strong,           lemma::order_preserving,
      lemma::byz_view_containment,       lemma::byz_lockstep,            lemma::byz_iteration_bound,
      lemma::byz_validator_contract,     lemma::byz_consensus_contract,  lemma::byz_count_consensus,
      lemma::committee_announcement,
  };
  return r;
}

void check_manifest_complete() {
  std::set<std::string> seen;
  for (const auto* list : {&deterministic_lemma_manifest(), &probabilistic_lemma_manifest()}) {
    for (const auto& tag : *list) {
      if (!seen.insert(tag).second) throw MonitorViolation("lemma listed twice in manifest: " + tag);
      if (!monitor_registry().count(tag)) throw MonitorViolation("no monitor registered for " + tag);
    }
  }
  for (const auto& tag : monitor_registry()) {
    if (!seen.count(tag)) throw MonitorViolation("monitor without manifest entry: " + tag);
  }
}

CrashMonitor::CrashMonitor(std::uint64_t n) : n_(n), log_n_(ceil_log2(n)) {}

void CrashMonitor::fail(const char* tag, std::uint64_t round, std::string witness) {
  ++fails_[tag];
  verdicts_.push_back({tag, round, false, std::move(witness)});
}

std::uint64_t CrashMonitor::failures() const {
  std::uint64_t k = 0;
  for (const auto& [tag, c] : fails_) k += c;
  return k;
}

namespace {

struct PhaseStats {
  std::optional<std::uint32_t> min_depth;  // over live undecided nodes
  std::uint32_t min_p = UINT32_MAX;
  std::uint32_t max_p = 0;
  bool any_elected = false;
  bool any_live = false;
};

PhaseStats stats_of(const std::vector<crash::CrashNodeState>& states) {
  PhaseStats s;
  for (const auto& v : states) {
    if (v.crashed) continue;
    s.any_live = true;
    s.min_p = std::min(s.min_p, v.p);
    s.max_p = std::max(s.max_p, v.p);
    s.any_elected |= v.elected;
    if (v.I.size() > 1) s.min_depth = s.min_depth ? std::min(*s.min_depth, v.d) : v.d;
  }
  return s;
}

}  // namespace

void CrashMonitor::start(const std::vector<crash::CrashNodeState>& states) {
  prev_ = states;
  const auto s = stats_of(states);
  prev_min_depth_ = s.min_depth;
  prev_min_p_ = s.min_p;
  prev_no_committee_ = !s.any_elected;
  members_at_start_.clear();
  for (NodeIndex v = 0; v < states.size(); ++v) {
    if (!states[v].crashed && states[v].elected) members_at_start_.push_back(v);
  }
}

void CrashMonitor::check_occupancy(std::uint64_t round, const std::vector<crash::CrashNodeState>& states) {
  ++checks_[lemma::processor_less_interval];
  // Count, for each distinct live interval J, the live nodes whose interval lies inside J.
  std::vector<crash::Interval> live;
  for (const auto& v : states) {
    if (!v.crashed) live.push_back(v.I);
  }
  std::sort(live.begin(), live.end());
  std::vector<crash::Interval> distinct(live);
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  for (const auto& J : distinct) {
    auto it = std::lower_bound(live.begin(), live.end(), crash::Interval{J.lo, 0});
    std::uint64_t inside = 0;
    for (; it != live.end() && it->lo <= J.hi; ++it) inside += it->hi <= J.hi ? 1 : 0;
    if (inside > J.size()) {
      std::ostringstream os;
      os << inside << " live nodes inside [" << J.lo << "," << J.hi << "]";
      fail(lemma::processor_less_interval, round, os.str());
    }
  }
}

void CrashMonitor::after_round(std::uint64_t round, const std::vector<crash::CrashNodeState>& states) {
  ++checks_[lemma::crash_monotonicity];
  for (NodeIndex v = 0; v < states.size(); ++v) {
    if (states[v].crashed) continue;
    if (states[v].d < prev_[v].d || states[v].p < prev_[v].p) {
      fail(lemma::crash_monotonicity, round,
           "node " + std::to_string(states[v].id.value) + " went from (d,p)=(" + std::to_string(prev_[v].d) + "," +
               std::to_string(prev_[v].p) + ") to (" + std::to_string(states[v].d) + "," +
               std::to_string(states[v].p) + ")");
    }
    if (prev_[v].I.size() == 1 && !(states[v].I == prev_[v].I)) {
      fail(lemma::crash_monotonicity, round, "decided node " + std::to_string(states[v].id.value) + " moved");
    }
  }
  check_occupancy(round, states);
  if (round % 3 == 0) phase_end(round, states);
  prev_ = states;
}

void CrashMonitor::phase_end(std::uint64_t round, const std::vector<crash::CrashNodeState>& states) {
  const auto s = stats_of(states);
  if (!s.any_live) return;

  ++checks_[lemma::bounded_difference_k];
  if (s.max_p > s.min_p + 1) {
    fail(lemma::bounded_difference_k, round,
         "max p " + std::to_string(s.max_p) + " > min p " + std::to_string(s.min_p) + " + 1");
  }

  if (prev_no_committee_) {
    ++checks_[lemma::crash_rebuild_committee];
    if (s.min_p < prev_min_p_ + 1) {
      fail(lemma::crash_rebuild_committee, round,
           "no committee last phase but min p stayed at " + std::to_string(s.min_p));
    }
  }
  if (s.min_p > prev_min_p_) ++rebuild_phases_;

  bool member_survived = false;
  for (auto v : members_at_start_) member_survived |= !states[v].crashed;
  if (member_survived && prev_min_depth_ && *prev_min_depth_ <= log_n_ && s.min_depth) {
    ++checks_[lemma::no_crash_increasing_height];
    if (*s.min_depth < *prev_min_depth_ + 1) {
      fail(lemma::no_crash_increasing_height, round,
           "min depth " + std::to_string(*s.min_depth) + " after " + std::to_string(*prev_min_depth_) +
               " with a surviving committee member");
    }
  }

  prev_min_depth_ = s.min_depth;
  prev_min_p_ = s.min_p;
  prev_no_committee_ = !s.any_elected;
  members_at_start_.clear();
  for (NodeIndex v = 0; v < states.size(); ++v) {
    if (!states[v].crashed && states[v].elected) members_at_start_.push_back(v);
  }
}

void CrashMonitor::finish(const std::vector<crash::CrashNodeState>& states, std::span<const NodeOutcome> outcome,
                          std::uint64_t messages_total) {
  ++checks_[lemma::crash_termination];
  for (const auto& v : states) {
    if (!v.crashed && v.I.size() != 1) {
      fail(lemma::crash_termination, 0,
           "node " + std::to_string(v.id.value) + " ends with |I|=" + std::to_string(v.I.size()));
      break;
    }
  }
  ++checks_[lemma::unique_strong];
  auto u = check_unique_strong(outcome, n_);
  if (!u.holds) fail(lemma::unique_strong, 0, u.witness);
  ++checks_[lemma::crash_message_cap];
  const double cap = kCrashMessageCap * static_cast<double>(n_) * static_cast<double>(n_) * log_n_;
  if (static_cast<double>(messages_total) > cap) {
    fail(lemma::crash_message_cap, 0, std::to_string(messages_total) + " messages > cap " + std::to_string(cap));
  }
  for (const char* tag : {lemma::no_crash_increasing_height, lemma::processor_less_interval,
                          lemma::crash_rebuild_committee, lemma::bounded_difference_k, lemma::crash_termination,
                          lemma::crash_monotonicity, lemma::crash_message_cap, lemma::unique_strong}) {
    if (fails_.count(tag)) continue;
    verdicts_.push_back({tag, 0, true, std::to_string(checks_[tag]) + " checkpoints"});
  }
}

}  // namespace rsim
