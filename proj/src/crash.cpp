#include "rsim/crash.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_set>

namespace rsim::crash {

Interval bot(Interval I) {
  if (I.size() <= 1) throw DegenerateInterval("bot of a singleton interval");
  return {I.lo, (I.lo + I.hi) / 2};
}

Interval top(Interval I) {
  if (I.size() <= 1) throw DegenerateInterval("top of a singleton interval");
  return {(I.lo + I.hi) / 2 + 1, I.hi};
}

std::size_t rank(NodeId x, std::span<const NodeId> set) {
  std::size_t below = 0;
  bool found = false;
  for (auto y : set) {
    if (y < x) ++below;
    if (y == x) found = true;
  }
  if (!found) throw NotMember("id " + std::to_string(x.value) + " not in set");
  return below + 1;
}

std::uint64_t CrashMessage::bits_each(const Widths& w) const {
  if (kind == MessageType::elect_notify) return kTagBits;
  return kTagBits + w.id + 2ULL * w.pos + 2ULL * w.level;
}

bool operator==(const CrashMessage& a, const CrashMessage& b) {
  if (a.kind != b.kind) return false;
  if (a.kind == MessageType::elect_notify) return true;
  return a.body.id == b.body.id && a.body.I == b.body.I && a.body.d == b.body.d && a.body.p == b.body.p;
}

BitString encode(const CrashMessage& m, const Widths& w) {
  BitWriter out;
  out.put_tag(m.kind);
  if (m.kind == MessageType::elect_notify) return out.take();
  if (m.kind != MessageType::status_report && m.kind != MessageType::committee_response) {
    throw EncodeError("not a crash-protocol message type");
  }
  out.put_id(m.body.id, w);
  out.put_pos(m.body.I.lo, w);
  out.put_pos(m.body.I.hi, w);
  out.put(m.body.d, w.level);
  out.put(m.body.p, w.level);
  return out.take();
}

CrashMessage decode_crash(const BitString& bits, const Widths& w) {
  BitReader in(bits);
  CrashMessage m;
  m.kind = in.get_tag();
  if (m.kind == MessageType::status_report || m.kind == MessageType::committee_response) {
    m.body.id = in.get_id(w);
    m.body.I.lo = static_cast<std::uint32_t>(in.get_pos(w));
    m.body.I.hi = static_cast<std::uint32_t>(in.get_pos(w));
    m.body.d = static_cast<std::uint32_t>(in.get(w.level));
    m.body.p = static_cast<std::uint32_t>(in.get(w.level));
  } else if (m.kind != MessageType::elect_notify) {
    throw EncodeError("not a crash-protocol message type");
  }
  if (!in.exhausted()) throw EncodeError("trailing bits after crash message");
  return m;
}

ElectionRule ElectionRule::standard(std::uint64_t n) {
  ElectionRule r;
  r.n = n;
  r.base = 256.0 * std::log2(static_cast<double>(n)) / static_cast<double>(n);
  return r;
}

double ElectionRule::probability(std::uint32_t p) const {
  const double raw = base * std::ldexp(1.0, static_cast<int>(std::min<std::uint32_t>(p, 1000)));
  if (raw > 1.0 && !clamp) throw ConfigError("election probability exceeds 1 with clamping disabled");
  return clamp_probability(raw);
}

CrashNodeState init_node(NodeId id, std::uint64_t n, PrivateStream& rng, const ElectionRule& rule) {
  CrashNodeState s;
  s.id = id;
  s.I = {1, static_cast<std::uint32_t>(n)};
  s.elected = rng.bernoulli(rule.probability(0));
  return s;
}

std::vector<CommitteeResponse> committee_action(std::span<const StatusReport> reports, std::uint32_t p_self,
                                                Mutation mutation) {
  std::vector<CommitteeResponse> out(reports.size());
  if (reports.empty()) return out;
  // singletons cannot be halved, so the working depth is the minimum over undecided reports
  std::uint32_t d_min = UINT32_MAX;
  for (const auto& r : reports) {
    if (r.I.size() > 1) d_min = std::min(d_min, r.d);
  }

  // Reports sorted by (lo, hi) answer "how many intervals lie inside [a, b]" by a scan of the
  // lo-range; min-depth intervals of one depth are disjoint so the scans stay linear overall.
  std::vector<std::uint32_t> by_lo(reports.size());
  for (std::uint32_t i = 0; i < by_lo.size(); ++i) by_lo[i] = i;
  std::sort(by_lo.begin(), by_lo.end(), [&](std::uint32_t a, std::uint32_t b) {
    return std::tie(reports[a].I.lo, reports[a].I.hi, reports[a].id) < std::tie(reports[b].I.lo, reports[b].I.hi, reports[b].id);
  });

  std::map<Interval, std::size_t> inside_bot;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& w = reports[i];
    auto& resp = out[i];
    resp.id = w.id;
    resp.p = p_self;
    if (w.d > d_min || w.I.size() == 1) {
      resp.I = w.I;
      resp.d = w.d;
      continue;
    }
    const Interval lower = bot(w.I);
    auto it = inside_bot.find(w.I);
    if (it == inside_bot.end()) {
      std::size_t cnt = 0;
      auto first = std::lower_bound(by_lo.begin(), by_lo.end(), lower.lo,
                                    [&](std::uint32_t k, std::uint32_t lo) { return reports[k].I.lo < lo; });
      for (auto p = first; p != by_lo.end() && reports[*p].I.lo <= lower.hi; ++p) {
        if (reports[*p].I.hi <= lower.hi) ++cnt;
      }
      it = inside_bot.emplace(w.I, cnt).first;
    }
    // reports with the identical interval are contiguous in by_lo, ordered by id
    auto group = std::lower_bound(by_lo.begin(), by_lo.end(), std::pair{w.I, w.id},
                                  [&](std::uint32_t k, const std::pair<Interval, NodeId>& key) {
                                    return std::tie(reports[k].I, reports[k].id) < std::tie(key.first, key.second);
                                  });
    auto first_same = std::lower_bound(by_lo.begin(), by_lo.end(), w.I, [&](std::uint32_t k, const Interval& I) {
      return reports[k].I < I;
    });
    std::size_t r = static_cast<std::size_t>(group - first_same) + 1;
    if (mutation == Mutation::rank_off_by_one) r -= 1;
    if (it->second + r <= lower.size()) {
      resp.I = lower;
    } else {
      resp.I = top(w.I);
    }
    resp.d = w.d + 1;
  }
  return out;
}

void node_action(std::span<const CommitteeResponse> responses, CrashNodeState& state, PrivateStream& rng,
                 const ElectionRule& rule) {
  if (responses.empty()) {
    ++state.p;
    if (!state.elected) state.elected = rng.bernoulli(rule.probability(state.p));
    return;
  }
  const CommitteeResponse* best = &responses[0];
  std::uint32_t p_hat = 0;
  for (const auto& r : responses) {
    if (r.d > best->d || (r.d == best->d && r.I.lo < best->I.lo)) best = &r;
    p_hat = std::max(p_hat, r.p);
  }
  if (state.I.size() > 1) {
    state.d = best->d;
    state.I = best->I;
  }
  if (p_hat > state.p) {
    state.p = p_hat;
    if (!state.elected) state.elected = rng.bernoulli(rule.probability(state.p));
  }
}

std::uint32_t phase_count(std::uint64_t n) { return 3 * ceil_log2(n); }

std::vector<NodeId> draw_ids(std::uint64_t n, std::uint64_t N, std::uint64_t seed) {
  if (n > N) throw ConfigError("need n <= N");
  PrivateStream rng(seed, 0x6964735f64726177ULL);
  std::vector<NodeId> ids;
  ids.reserve(n);
  if (N <= 4 * n) {
    std::vector<std::uint64_t> all(N);
    for (std::uint64_t i = 0; i < N; ++i) all[i] = i + 1;
    for (std::uint64_t i = 0; i < n; ++i) std::swap(all[i], all[i + rng.below(N - i)]);
    for (std::uint64_t i = 0; i < n; ++i) ids.push_back(NodeId{all[i]});
  } else {
    std::unordered_set<std::uint64_t> seen;
    while (ids.size() < n) {
      const std::uint64_t v = rng.below(N) + 1;
      if (seen.insert(v).second) ids.push_back(NodeId{v});
    }
  }
  return ids;
}

CrashSim::CrashSim(CrashConfig cfg)
    : cfg_(std::move(cfg)),
      phases_(phase_count(cfg_.n)),
      engine_(cfg_.n, Widths::make(cfg_.n, cfg_.N), cfg_.count_policy, cfg_.log) {
  if (cfg_.n < 2) throw ConfigError("crash protocol needs n >= 2");
  if (cfg_.election.n == 0) cfg_.election = ElectionRule::standard(cfg_.n);
  if (cfg_.ids.empty()) cfg_.ids = draw_ids(cfg_.n, cfg_.N, cfg_.seed);
  if (cfg_.ids.size() != cfg_.n) throw ConfigError("explicit id list must have n entries");
  states_.resize(cfg_.n);
  rng_.resize(cfg_.n);
  notifiers_.resize(cfg_.n);
  reports_.resize(cfg_.n);
  engine_.set_audience(engine_.everyone());
  for (NodeIndex v = 0; v < cfg_.n; ++v) {
    rng_[v] = PrivateStream(cfg_.seed, v);
    states_[v] = init_node(cfg_.ids[v], cfg_.n, rng_[v], cfg_.election);
  }
}

void CrashSim::begin_round() {
  engine_.begin_round();
  const auto sub = sub_round_of(engine_.round());
  memo_.clear();
  for (NodeIndex v = 0; v < cfg_.n; ++v) {
    if (!engine_.alive(v)) continue;
    auto& s = states_[v];
    auto out = engine_.outbox(v);
    const bool serves = s.elected && !(cfg_.early_exit && s.I.size() == 1);
    if (sub == 1) {
      if (serves) out.broadcast(CrashMessage{MessageType::elect_notify, {}});
    } else if (sub == 2) {
      out.multicast(notifiers_[v], CrashMessage{MessageType::status_report, {s.id, s.I, s.d, s.p}});
    } else {
      if (!serves || reports_[v].empty()) continue;
      // identical report sets give identical answers; reuse across members
      auto responses = memo_.find(reports_[v]);
      if (responses == memo_.end()) {
        std::vector<StatusReport> M;
        M.reserve(reports_[v].size());
        for (auto ri : reports_[v]) M.push_back(round2_[ri]);
        responses = memo_.emplace(reports_[v], committee_action(M, s.p, cfg_.mutation)).first;
      }
      const auto& answers = responses->second;
      to_.clear();
      batch_.clear();
      for (std::size_t i = 0; i < answers.size(); ++i) {
        batch_.push_back(CrashMessage{MessageType::committee_response, answers[i]});
        batch_.back().body.p = s.p;
        to_.push_back(report_sender_[reports_[v][i]]);
      }
      out.personalized(to_, batch_);
    }
  }
}

CrashObservation CrashSim::observe() const {
  CrashObservation o;
  o.round = engine_.round();
  o.phase = phase_of(o.round);
  o.sub_round = sub_round_of(o.round);
  o.n = cfg_.n;
  o.states = states_;
  o.engine = &engine_;
  return o;
}

void CrashSim::finish_round(const CrashDecision& decision) {
  for (auto v : decision.crash_now) {
    if (v >= cfg_.n || !engine_.alive(v)) continue;
    std::vector<NodeIndex> subset;
    for (const auto& [who, to] : decision.delivered_subset) {
      if (who == v) subset = to;
    }
    engine_.crash(v, std::move(subset));
    states_[v].crashed = true;
    ++crashes_;
  }
  const auto sub = sub_round_of(engine_.round());
  engine_.deliver();
  if (sub == 1) receive_notifications();
  if (sub == 2) receive_reports();
  if (sub == 3) receive_responses();
}

void CrashSim::receive_notifications() {
  for (NodeIndex v = 0; v < cfg_.n; ++v) {
    notifiers_[v].clear();
    if (!engine_.alive(v)) continue;
    const auto in = engine_.inbox(v);
    for (const auto& d : in.common) notifiers_[v].push_back(engine_.sender(d));
    for (const auto& d : in.own) notifiers_[v].push_back(engine_.sender(d));
  }
}

void CrashSim::receive_reports() {
  // the engine drops records at the next begin_round, so keep the report bodies for round 3
  round2_.clear();
  report_sender_.clear();
  for (const auto& r : engine_.submitted()) {
    report_sender_.push_back(r.sender);
    round2_.push_back(engine_.payload(r).body);
  }
  for (NodeIndex v = 0; v < cfg_.n; ++v) {
    reports_[v].clear();
    if (!engine_.alive(v) || !states_[v].elected) continue;
    const auto in = engine_.inbox(v);
    for (const auto* part : {&in.common, &in.own}) {
      for (const auto& d : *part) reports_[v].push_back(d.record);
    }
    for (auto ri : reports_[v]) states_[v].p = std::max(states_[v].p, round2_[ri].p);
  }
}

void CrashSim::receive_responses() {
  std::vector<CommitteeResponse> R;
  for (NodeIndex v = 0; v < cfg_.n; ++v) {
    if (!engine_.alive(v)) continue;
    R.clear();
    const auto in = engine_.inbox(v);
    for (const auto& d : in.common) R.push_back(engine_.payload(d).body);
    for (const auto& d : in.own) R.push_back(engine_.payload(d).body);
    node_action(R, states_[v], rng_[v], cfg_.election);
  }
}

std::string CrashSim::state_key() const {
  std::string k;
  auto put = [&](std::uint64_t x) {
    k += std::to_string(x);
    k += ',';
  };
  put(engine_.round());
  put(crashes_);
  for (NodeIndex v = 0; v < cfg_.n; ++v) {
    const auto& s = states_[v];
    put(s.crashed);
    if (s.crashed) continue;
    put(s.I.lo);
    put(s.I.hi);
    put(s.d);
    put(s.p);
    put(s.elected);
    k += '|';
    for (auto u : notifiers_[v]) put(u);
    k += '|';
    std::vector<std::tuple<std::uint64_t, std::uint32_t, std::uint32_t, std::uint32_t, std::uint32_t>> seen;
    for (auto ri : reports_[v]) {
      const auto& r = round2_[ri];
      seen.emplace_back(r.id.value, r.I.lo, r.I.hi, r.d, r.p);
    }
    std::sort(seen.begin(), seen.end());
    for (auto& [a, b, c, d, e] : seen) {
      put(a), put(b), put(c), put(d), put(e);
    }
    k += ';';
  }
  return k;
}

std::vector<NodeOutcome> CrashSim::outcome() const {
  std::vector<NodeOutcome> out;
  out.reserve(cfg_.n);
  for (NodeIndex v = 0; v < cfg_.n; ++v) {
    NodeOutcome o;
    o.original = states_[v].id;
    o.faulty = states_[v].crashed;
    if (!states_[v].crashed && states_[v].I.size() == 1) o.new_id = states_[v].I.lo;
    out.push_back(o);
  }
  return out;
}

}  // namespace rsim::crash
