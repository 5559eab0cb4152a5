#include "rsim/byz_sim.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "rsim/byz_protocol.hpp"
#include "rsim/crash.hpp"
#include "rsim/engine.hpp"
#include "rsim/monitors.hpp"

namespace rsim::byz {

std::uint64_t loop_messages(const MetricCounters& m) {
  return m.by_type(MessageType::val_init) + m.by_type(MessageType::val_echo) + m.by_type(MessageType::diff_report) +
         m.by_type(MessageType::consensus_msg);
}

std::uint64_t announce_messages(const MetricCounters& m) {
  return m.by_type(MessageType::id_announce) + m.by_type(MessageType::new_id);
}

namespace {

std::string seg_str(Segment s) {
  return "[" + std::to_string(s.lo) + "," + std::to_string(s.hi) + "]";
}

struct MemberState {
  IdentityList L;
  std::vector<Segment> J;  ///< stack, back = top
  std::vector<Segment> Jhat;
  std::vector<Segment> dirty;
  std::vector<NodeIndex> announced;
};

class Sim final : public ByzContext {
 public:
  using Engine = RoundEngine<ByzMessage>;

  Sim(const ByzRunConfig& cfg, ByzAdversary& adv)
      : cfg_(cfg),
        params_(ByzParams::make(cfg.n, cfg.N, cfg.epsilon0, cfg.p0, cfg.clamp)),
        shared_(cfg.seed),
        hasher_(cfg.N, shared_),
        engine_(cfg.n, Widths::make(cfg.n, cfg.N), cfg.count_policy, cfg.log),
        cc_(ConsensusConfig::from(params_)),
        adv_(adv) {
    const auto n = cfg.n;
    ids_ = cfg.ids.empty() ? crash::draw_ids(n, cfg.N, cfg.seed) : cfg.ids;
    if (ids_.size() != n) throw ConfigError("explicit id list must have n entries");
    byz_.assign(n, 0);
    if (!cfg.coalition.empty()) {
      coalition_ = cfg.coalition;
    } else if (cfg.f > 0) {
      // Fixed before round 0 and independent of the lottery.
      PrivateStream pick(mix(cfg.seed, 0xb12ULL), 0);
      std::vector<NodeIndex> all(n);
      for (NodeIndex v = 0; v < n; ++v) all[v] = v;
      for (std::uint64_t i = 0; i < cfg.f; ++i) std::swap(all[i], all[i + pick.below(n - i)]);
      coalition_.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(cfg.f));
    }
    std::sort(coalition_.begin(), coalition_.end());
    for (auto b : coalition_) {
      if (b >= n || byz_[b]) throw ConfigError("invalid coalition");
      byz_[b] = 1;
    }
    lottery_.resize(n);
    for (NodeIndex v = 0; v < n; ++v) {
      lottery_[v] = shared_.bernoulli(DrawKind::committee_lottery, ids_[v].value, params_.p0) ? 1 : 0;
      if (!byz_[v]) correct_.push_back(v);
    }
    everyone_.assign(engine_.everyone().begin(), engine_.everyone().end());
    view_.resize(n);
    in_view_.assign(n, std::vector<std::uint8_t>(n, 0));
    news_.resize(n);
    byz_inbox_.resize(n);
    byz_list_.resize(n);
    slot_.assign(n, -1);
    std::vector<std::uint64_t> sorted;
    for (auto id : ids_) sorted.push_back(id.value);
    std::sort(sorted.begin(), sorted.end());
    all_ids_sorted_ = std::move(sorted);
  }

  Transcript run();

  // ByzContext
  const StepInfo& step() const override { return step_; }
  const ByzParams& params() const override { return params_; }
  std::span<const NodeIndex> coalition() const override { return coalition_; }
  std::span<const NodeIndex> everyone() const override { return everyone_; }
  NodeId id(NodeIndex v) const override { return ids_[v]; }
  bool elected(NodeIndex v) const override { return lottery_[v] != 0; }
  std::span<const NodeIndex> correct_members() const override { return public_members_; }
  std::span<const NodeIndex> view(NodeIndex b) const override { return view_[b]; }
  std::span<const std::pair<NodeIndex, ByzMessage>> inbox(NodeIndex b) const override { return byz_inbox_[b]; }
  const IdentityList& list(NodeIndex b) const override { return byz_list_[b]; }
  Fingerprint fingerprint(const IdentityList& L) const override {
    return hasher_.hash(step_.iteration, L, step_.segment);
  }
  void send(NodeIndex b, std::span<const NodeIndex> to, ByzMessage m) override {
    if (b >= byz_.size() || !byz_[b]) throw ConfigError("adversary may only send as a coalition member");
    engine_.outbox(b).multicast(to, std::move(m));
  }
  void send_each(NodeIndex b, std::span<const NodeIndex> to, std::span<const ByzMessage> m) override {
    if (b >= byz_.size() || !byz_[b]) throw ConfigError("adversary may only send as a coalition member");
    engine_.outbox(b).personalized(to, m);
  }

 private:
  template <class SendFn, class RecvFn>
  void round(StepInfo st, SendFn&& send_fn, RecvFn&& recv_fn) {
    engine_.begin_round();
    st.round = engine_.round();
    step_ = st;
    send_fn();
    adv_.act(*this);
    engine_.deliver();
    collect();
    recv_fn();
  }

  void collect();
  void elect_round();
  void announce_round();
  void run_loop();
  bool iteration_segment(std::uint64_t it, Segment j);
  void iteration_single(std::uint64_t it, Segment j);
  std::vector<std::uint8_t> run_consensus(const std::vector<std::uint8_t>& inputs, std::uint64_t it, Segment j);
  void new_round();
  void check_processed(Segment j, const std::vector<std::uint8_t>& clean, std::uint64_t it);
  void final_checks();
  void fail(const char* tag, std::string witness);
  std::uint64_t true_count(Segment j) const {
    auto lo = std::lower_bound(all_ids_sorted_.begin(), all_ids_sorted_.end(), j.lo);
    auto hi = std::upper_bound(all_ids_sorted_.begin(), all_ids_sorted_.end(), j.hi);
    return static_cast<std::uint64_t>(hi - lo);
  }

  ByzRunConfig cfg_;
  ByzParams params_;
  SharedRandomness shared_;
  SegmentHasher hasher_;
  Engine engine_;
  ConsensusConfig cc_;
  ByzAdversary& adv_;
  StepInfo step_;

  std::vector<NodeId> ids_;
  std::vector<std::uint64_t> all_ids_sorted_;
  std::vector<std::uint8_t> lottery_;
  std::vector<std::uint8_t> byz_;
  std::vector<NodeIndex> coalition_, correct_, everyone_;
  std::vector<std::vector<NodeIndex>> view_;
  std::vector<std::vector<std::uint8_t>> in_view_;
  std::vector<NodeIndex> members_;  ///< G, ascending
  std::vector<NodeIndex> public_members_;
  std::vector<int> slot_;
  std::vector<std::uint8_t> core_;
  std::vector<MemberState> ms_;

  std::vector<Mail> shared_mail_;
  std::vector<std::vector<Mail>> own_mail_;
  std::vector<std::vector<std::pair<NodeIndex, ByzMessage>>> byz_inbox_;
  std::vector<IdentityList> byz_list_;
  std::vector<std::map<NodeIndex, std::optional<std::uint64_t>>> news_;

  std::uint64_t iterations_ = 0;
  std::uint64_t validator_runs_ = 0, consensus_runs_ = 0;
  bool collision_ = false;
  bool aborted_ = false;
  std::uint64_t divergence_ = 0;
  std::map<std::string, std::uint64_t> fails_;
  std::vector<Verdict> verdicts_;
};

void Sim::fail(const char* tag, std::string witness) {
  if (fails_[tag]++ < 8) verdicts_.push_back({tag, engine_.round(), false, std::move(witness)});
}

void Sim::collect() {
  bool any_new = false;
  for (const auto& r : engine_.submitted()) any_new = any_new || engine_.payload(r).kind == MessageType::new_id;
  if (any_new) {
    for (auto v : correct_) {
      auto in = engine_.inbox(v);
      for (const auto* part : {&in.own, &in.common}) {
        for (const auto& d : *part) {
          const auto& m = engine_.payload(d);
          const auto s = engine_.sender(d);
          if (m.kind == MessageType::new_id && in_view_[v][s]) news_[v].try_emplace(s, m.new_id);
        }
      }
    }
  }
  if (step_.step != Step::consensus) {
    for (auto b : coalition_) {
      byz_inbox_[b].clear();
      for (const auto& d : engine_.inbox(b).own) byz_inbox_[b].emplace_back(engine_.sender(d), engine_.payload(d));
    }
  }
  if (members_.empty()) return;
  shared_mail_.clear();
  for (auto& o : own_mail_) o.clear();
  for (const auto& d : engine_.inbox(members_[0]).common) {
    const auto s = engine_.sender(d);
    const Mail m{s, &engine_.payload(d)};
    if (core_[s]) {
      shared_mail_.push_back(m);
    } else {
      for (std::size_t k = 0; k < members_.size(); ++k)
        if (in_view_[members_[k]][s]) own_mail_[k].push_back(m);
    }
  }
  for (std::size_t k = 0; k < members_.size(); ++k) {
    const auto v = members_[k];
    for (const auto& d : engine_.inbox(v).own) {
      const auto s = engine_.sender(d);
      if (in_view_[v][s]) own_mail_[k].push_back({s, &engine_.payload(d)});
    }
  }
}

void Sim::elect_round() {
  round(
      StepInfo{Step::elect},
      [&] {
        for (auto v : correct_)
          if (lottery_[v]) engine_.outbox(v).broadcast(make_elect(ids_[v]));
      },
      [&] {
        for (NodeIndex v = 0; v < cfg_.n; ++v) {
          for (const auto& d : engine_.inbox(v).own) {
            const auto& m = engine_.payload(d);
            const auto s = engine_.sender(d);
            // Authenticated sender; the lottery bit of its own id decides.
            if (m.kind != MessageType::elect || m.id != ids_[s] || !lottery_[s] || in_view_[v][s]) continue;
            in_view_[v][s] = 1;
            view_[v].push_back(s);
          }
          std::sort(view_[v].begin(), view_[v].end());
        }
      });
  for (auto v : correct_)
    if (lottery_[v]) members_.push_back(v);
  for (std::size_t k = 0; k < members_.size(); ++k) slot_[members_[k]] = static_cast<int>(k);
  engine_.set_audience(members_);
  own_mail_.assign(members_.size(), {});
  core_.assign(cfg_.n, 1);
  for (auto v : members_)
    for (NodeIndex s = 0; s < cfg_.n; ++s) core_[s] = core_[s] && in_view_[v][s];
  std::vector<std::uint8_t> seen(cfg_.n, 0);
  for (auto b : coalition_)
    for (auto s : view_[b])
      if (!byz_[s]) seen[s] = 1;
  for (NodeIndex s = 0; s < cfg_.n; ++s)
    if (seen[s]) public_members_.push_back(s);

  std::uint64_t missing = 0;
  std::string witness;
  for (auto v : correct_) {
    for (auto g : members_) {
      if (!in_view_[v][g]) {
        if (missing++ == 0) witness = "member " + std::to_string(g) + " missing from view of " + std::to_string(v);
      }
    }
  }
  if (missing) fail(lemma::byz_view_containment, witness);
}

void Sim::announce_round() {
  ms_.resize(members_.size());
  for (auto& m : ms_) m.L = IdentityList(cfg_.N);
  for (auto b : coalition_)
    if (lottery_[b]) byz_list_[b] = IdentityList(cfg_.N);
  round(
      StepInfo{Step::announce},
      [&] {
        for (auto v : correct_) engine_.outbox(v).multicast(view_[v], make_id(ids_[v]));
      },
      [&] {
        auto absorb = [&](std::span<const Delivery> ds, IdentityList& L, std::vector<NodeIndex>* who) {
          for (const auto& d : ds) {
            const auto& m = engine_.payload(d);
            const auto s = engine_.sender(d);
            if (m.kind != MessageType::id_announce || m.id != ids_[s]) continue;
            L.set(m.id.value, true);
            if (who) who->push_back(s);
          }
        };
        for (std::size_t k = 0; k < members_.size(); ++k) {
          auto in = engine_.inbox(members_[k]);
          absorb(in.common, ms_[k].L, &ms_[k].announced);
          absorb(in.own, ms_[k].L, &ms_[k].announced);
          auto& a = ms_[k].announced;
          std::sort(a.begin(), a.end());
          a.erase(std::unique(a.begin(), a.end()), a.end());
        }
        for (auto b : coalition_)
          if (lottery_[b]) absorb(engine_.inbox(b).own, byz_list_[b], nullptr);
      });
  const Segment all{1, static_cast<std::uint32_t>(cfg_.N)};
  for (std::size_t k = 1; k < ms_.size(); ++k) {
    std::uint64_t diff = 0;
    for (auto p : ms_[0].L.ones(all)) diff += ms_[k].L.get(p) ? 0 : 1;
    for (auto p : ms_[k].L.ones(all)) diff += ms_[0].L.get(p) ? 0 : 1;
    divergence_ = std::max(divergence_, diff);
  }
}

std::vector<std::uint8_t> Sim::run_consensus(const std::vector<std::uint8_t>& inputs, std::uint64_t it, Segment j) {
  ++consensus_runs_;
  ConsensusShared shared(cc_);
  std::vector<ConsensusNode> nodes;
  nodes.reserve(members_.size());
  for (auto in : inputs) nodes.emplace_back(cc_, in != 0);
  const std::uint64_t R = cc_.rounds();
  for (std::uint64_t r = 1; r <= R; ++r) {
    round(
        StepInfo{Step::consensus, 0, it, j, r, R},
        [&] {
          for (std::size_t k = 0; k < members_.size(); ++k) {
            auto s = nodes[k].sends(r);
            auto out = engine_.outbox(members_[k]);
            if (s.init) out.multicast(view_[members_[k]], make_cons_init(*s.init));
            if (!s.echoes.empty()) out.multicast(view_[members_[k]], make_cons_echo(std::move(s.echoes)));
          }
        },
        [&] {
          shared.begin_round();
          for (const auto& m : shared_mail_) shared.add(m.sender, *m.msg);
          for (std::size_t k = 0; k < members_.size(); ++k) nodes[k].receive(r, shared, own_mail_[k]);
        });
  }
  std::vector<std::uint8_t> out(nodes.size());
  bool any0 = false, any1 = false, in0 = false, in1 = false;
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    out[k] = nodes[k].output() ? 1 : 0;
    (out[k] ? any1 : any0) = true;
    (inputs[k] ? in1 : in0) = true;
  }
  if (any0 && any1) fail(lemma::byz_consensus_contract, "disagreement in iteration " + std::to_string(it));
  if ((any1 && !in1) || (any0 && !in0)) fail(lemma::byz_consensus_contract, "output is no correct input in iteration " + std::to_string(it));
  return out;
}

bool Sim::iteration_segment(std::uint64_t it, Segment j) {
  const std::size_t g = members_.size();
  ++validator_runs_;
  std::vector<std::vector<std::uint32_t>> content(g);
  std::map<std::vector<std::uint32_t>, Fingerprint> memo;
  std::map<Fingerprint, const std::vector<std::uint32_t>*> owner;
  std::vector<Fingerprint> fp(g);
  for (std::size_t k = 0; k < g; ++k) {
    content[k] = ms_[k].L.ones(j);
    auto f = memo.find(content[k]);
    if (f == memo.end()) {
      f = memo.emplace(content[k], hasher_.hash_positions(it, content[k])).first;
      auto [o, fresh] = owner.emplace(f->second, &f->first);
      if (!fresh && *o->second != f->first) collision_ = true;
    }
    fp[k] = f->second;
  }

  std::vector<std::optional<Fingerprint>> echo(g);
  std::vector<ValidatorResult> res(g);
  VoteTally<Fingerprint> tally;
  std::vector<std::pair<NodeIndex, Fingerprint>> votes;
  auto tally_round = [&](MessageType kind, auto&& per_member) {
    votes.clear();
    for (const auto& m : shared_mail_)
      if (m.msg->kind == kind) votes.emplace_back(m.sender, m.msg->value);
    tally.set_shared(votes);
    for (std::size_t k = 0; k < g; ++k) {
      votes.clear();
      for (const auto& m : own_mail_[k])
        if (m.msg->kind == kind) votes.emplace_back(m.sender, m.msg->value);
      per_member(k, tally.at(votes));
    }
  };
  round(
      StepInfo{Step::val_init, 0, it, j},
      [&] {
        for (std::size_t k = 0; k < g; ++k)
          engine_.outbox(members_[k]).multicast(view_[members_[k]], make_val(MessageType::val_init, fp[k]));
      },
      [&] { tally_round(MessageType::val_init, [&](std::size_t k, const auto& c) { echo[k] = validator_echo(c, params_.c_g); }); });
  round(
      StepInfo{Step::val_echo, 0, it, j},
      [&] {
        for (std::size_t k = 0; k < g; ++k)
          if (echo[k]) engine_.outbox(members_[k]).multicast(view_[members_[k]], make_val(MessageType::val_echo, *echo[k]));
      },
      [&] {
        tally_round(MessageType::val_echo,
                    [&](std::size_t k, const auto& c) { res[k] = validator_decide(fp[k], c, params_.c_g); });
      });

  // Validator contract against ground truth.
  {
    bool unanimous = true;
    for (std::size_t k = 1; k < g; ++k) unanimous = unanimous && fp[k] == fp[0];
    for (std::size_t k = 0; k < g; ++k) {
      if (std::find(fp.begin(), fp.end(), res[k].out) == fp.end())
        fail(lemma::byz_validator_contract, "output is no correct input at iteration " + std::to_string(it));
      if (unanimous && (!res[k].same || res[k].out != fp[0]))
        fail(lemma::byz_validator_contract, "unanimous input not returned at iteration " + std::to_string(it));
      if (res[k].same) {
        for (std::size_t u = 0; u < g; ++u)
          if (res[u].out != res[k].out)
            fail(lemma::byz_validator_contract, "weak agreement broken at iteration " + std::to_string(it));
      }
    }
  }

  std::vector<std::uint8_t> same(g);
  for (std::size_t k = 0; k < g; ++k) same[k] = res[k].same ? 1 : 0;
  const auto same1 = run_consensus(same, it, j);

  std::vector<std::uint8_t> diff(g);
  for (std::size_t k = 0; k < g; ++k) diff[k] = (same1[k] && fp[k] != res[k].out) ? 1 : 0;
  VoteTally<bool> dt;
  std::vector<std::pair<NodeIndex, bool>> dv;
  std::vector<std::uint8_t> diff1(g);
  round(
      StepInfo{Step::diff, 0, it, j},
      [&] {
        for (std::size_t k = 0; k < g; ++k) engine_.outbox(members_[k]).multicast(view_[members_[k]], make_diff(diff[k] != 0));
      },
      [&] {
        dv.clear();
        for (const auto& m : shared_mail_)
          if (m.msg->kind == MessageType::diff_report) dv.emplace_back(m.sender, m.msg->bit);
        dt.set_shared(dv);
        for (std::size_t k = 0; k < g; ++k) {
          dv.clear();
          for (const auto& m : own_mail_[k])
            if (m.msg->kind == MessageType::diff_report) dv.emplace_back(m.sender, m.msg->bit);
          const auto c = dt.at(dv);
          auto ones = c.find(true);
          const double reports = ones == c.end() ? 0.0 : ones->second;
          diff1[k] = (diff[k] || reports > params_.c_g / 2.0) ? 1 : 0;
        }
      });
  const auto diff2 = run_consensus(diff1, it, j);

  std::vector<std::uint8_t> clean(g, 1);
  bool done_any = false;
  for (std::size_t k = 0; k < g; ++k) {
    auto& m = ms_[k];
    if (same1[k] && !diff2[k]) {
      done_any = true;
      m.Jhat.push_back(j);
      if (fp[k] != res[k].out) {
        m.L.fill_leftmost(j, res[k].out.count);
        m.dirty.push_back(j);
        clean[k] = 0;
      }
    } else {
      m.J.push_back(top(j));
      m.J.push_back(bot(j));
    }
  }
  if (done_any) check_processed(j, clean, it);
  return done_any;
}

void Sim::iteration_single(std::uint64_t it, Segment j) {
  const std::size_t g = members_.size();
  std::vector<std::uint8_t> bits(g);
  for (std::size_t k = 0; k < g; ++k) {
    bits[k] = ms_[k].L.get(j.lo) ? 1 : 0;
    ms_[k].Jhat.push_back(j);
  }
  const auto out = run_consensus(bits, it, j);
  for (std::size_t k = 0; k < g; ++k) ms_[k].L.set(j.lo, out[k] != 0);
  check_processed(j, std::vector<std::uint8_t>(g, 1), it);
}

// Clean majority and count consensus for a segment entering J_hat.
void Sim::check_processed(Segment j, const std::vector<std::uint8_t>& clean, std::uint64_t it) {
  const std::size_t g = members_.size();
  const auto truth = true_count(j);
  std::map<std::vector<std::uint32_t>, std::uint64_t> classes;
  std::optional<std::uint64_t> count0;
  for (std::size_t k = 0; k < g; ++k) {
    const auto c = ms_[k].L.count(j);
    if (!count0) count0 = c;
    if (c != *count0)
      fail(lemma::byz_count_consensus, "members disagree on the count of " + seg_str(j) + " at iteration " + std::to_string(it));
    if (c > truth)
      fail(lemma::byz_count_consensus, "count of " + seg_str(j) + " exceeds the true " + std::to_string(truth));
    if (clean[k]) ++classes[ms_[k].L.ones(j)];
  }
  std::uint64_t best = 0;
  for (const auto& [c, k] : classes) best = std::max(best, k);
  if (2.0 * static_cast<double>(best) < params_.c_g)
    fail(lemma::byz_count_consensus, "no clean majority on " + seg_str(j) + " at iteration " + std::to_string(it));
}

void Sim::run_loop() {
  if (members_.empty()) return;
  const std::uint64_t f_eff = std::max<std::uint64_t>(coalition_.size(), 1);
  const double bound = 4.0 * static_cast<double>(f_eff) * std::log2(static_cast<double>(cfg_.N));
  const auto hard_cap = static_cast<std::uint64_t>(4.0 * bound) + 64;
  for (auto& m : ms_) m.J = {Segment{1, static_cast<std::uint32_t>(cfg_.N)}};
  while (!ms_[0].J.empty()) {
    for (std::size_t k = 1; k < ms_.size(); ++k) {
      if (ms_[k].J != ms_[0].J || ms_[k].Jhat.size() != ms_[0].Jhat.size() ||
          (!ms_[0].Jhat.empty() && ms_[k].Jhat.back() != ms_[0].Jhat.back())) {
        fail(lemma::byz_lockstep, "members diverge before iteration " + std::to_string(iterations_ + 1));
        aborted_ = true;
        return;
      }
    }
    if (iterations_ >= hard_cap) {
      fail(lemma::byz_iteration_bound, "loop stopped at the hard cap of " + std::to_string(hard_cap) + " iterations");
      aborted_ = true;
      return;
    }
    const Segment j = ms_[0].J.back();
    for (auto& m : ms_) m.J.pop_back();
    ++iterations_;
    if (j.size() > 1) iteration_segment(iterations_, j);
    else iteration_single(iterations_, j);
  }
  for (std::size_t k = 1; k < ms_.size(); ++k) {
    if (ms_[k].J != ms_[0].J || ms_[k].Jhat != ms_[0].Jhat) {
      fail(lemma::byz_lockstep, "members diverge after the loop");
      aborted_ = true;
    }
  }
  if (static_cast<double>(iterations_) > bound)
    fail(lemma::byz_iteration_bound, std::to_string(iterations_) + " iterations exceed " + std::to_string(bound));
}

void Sim::final_checks() {
  if (members_.empty() || aborted_) return;
  auto parts = ms_[0].Jhat;
  std::sort(parts.begin(), parts.end());
  std::uint64_t next = 1;
  bool ok = true;
  for (const auto& s : parts) {
    ok = ok && s.lo == next;
    next = std::uint64_t{s.hi} + 1;
  }
  ok = ok && next == cfg_.N + 1;
  if (!ok) fail(lemma::byz_lockstep, "processed segments do not partition [1,N]");
  for (const auto& j : ms_[0].Jhat) {
    std::vector<std::uint8_t> clean(ms_.size(), 1);
    for (std::size_t k = 0; k < ms_.size(); ++k)
      for (const auto& d : ms_[k].dirty) clean[k] = clean[k] && d != j;
    check_processed(j, clean, iterations_);
  }
}

void Sim::new_round() {
  round(
      StepInfo{Step::new_id, 0, iterations_},
      [&] {
        for (std::size_t k = 0; k < members_.size(); ++k) {
          auto& m = ms_[k];
          if (m.announced.empty()) continue;
          RankIndex idx(m.L);
          auto dirty = m.dirty;
          std::sort(dirty.begin(), dirty.end());
          std::vector<ByzMessage> out;
          out.reserve(m.announced.size());
          for (auto u : m.announced) {
            const auto id = ids_[u].value;
            auto it = std::upper_bound(dirty.begin(), dirty.end(), Segment{static_cast<std::uint32_t>(id), UINT32_MAX});
            const bool in_dirty = it != dirty.begin() && std::prev(it)->contains(id);
            const auto r = idx.rank(id);
            out.push_back(in_dirty || r < 1 || r > cfg_.n ? make_new(std::nullopt) : make_new(r));
          }
          engine_.outbox(members_[k]).personalized(m.announced, out);
        }
      },
      [] {});
}

Transcript Sim::run() {
  elect_round();
  announce_round();
  run_loop();
  final_checks();
  new_round();

  Transcript t;
  t.protocol = "byzantine";
  t.n = cfg_.n;
  t.N = cfg_.N;
  t.seed = cfg_.seed;
  t.f_budget = cfg_.f;
  t.f_actual = coalition_.size();
  std::uint64_t timeouts = 0;
  for (NodeIndex v = 0; v < cfg_.n; ++v) {
    NodeOutcome o{ids_[v], std::nullopt, byz_[v] != 0};
    if (!byz_[v]) {
      std::map<std::uint64_t, std::uint64_t> votes;
      for (const auto& [s, val] : news_[v])
        if (val) ++votes[*val];
      std::uint64_t best = 0;
      for (const auto& [val, c] : votes) {
        if (c > best) {
          best = c;
          o.new_id = val;
        }
      }
      if (static_cast<double>(news_[v].size()) < params_.c_g) {
        o.new_id.reset();
        ++timeouts;
      }
    }
    t.outcome.push_back(o);
  }
  const auto unique = check_unique_strong(t.outcome, cfg_.n);
  const auto order = check_order_preserving(t.outcome);
  t.success = unique.holds && order.holds;

  std::uint64_t byz_members = 0;
  for (auto b : coalition_) byz_members += lottery_[b];
  const double g = static_cast<double>(members_.size());
  const bool tail = g < params_.c_g || g > params_.c_hat_g || 2.0 * static_cast<double>(byz_members) >= params_.c_g;
  if (!t.success) t.failure_cause = tail ? "committee-tail" : collision_ ? "hash-collision" : "unexplained";

  for (const auto& tag : {lemma::byz_view_containment, lemma::byz_lockstep, lemma::byz_iteration_bound,
                          lemma::byz_validator_contract, lemma::byz_consensus_contract, lemma::byz_count_consensus}) {
    if (!fails_.count(tag)) verdicts_.push_back({tag, engine_.round(), true, ""});
  }
  verdicts_.push_back(unique);
  verdicts_.push_back(order);
  t.verdicts = std::move(verdicts_);

  t.metrics = engine_.metrics();
  t.metrics.committee_size_history = {members_.size() + byz_members};
  t.events = std::move(engine_.events());
  t.extra["iterations"] = static_cast<double>(iterations_);
  t.extra["committee_size"] = static_cast<double>(members_.size() + byz_members);
  t.extra["correct_committee"] = g;
  t.extra["byzantine_committee"] = static_cast<double>(byz_members);
  std::size_t widest = 0;
  for (auto v : correct_) widest = std::max(widest, view_[v].size());
  t.extra["view_size_max"] = static_cast<double>(widest);
  t.extra["c_g"] = params_.c_g;
  t.extra["c_hat_g"] = params_.c_hat_g;
  t.extra["p0"] = params_.p0;
  t.extra["list_divergence"] = static_cast<double>(divergence_);
  t.extra["hash_collision"] = collision_ ? 1.0 : 0.0;
  t.extra["committee_tail"] = tail ? 1.0 : 0.0;
  t.extra["timeouts"] = static_cast<double>(timeouts);
  t.extra["validator_runs"] = static_cast<double>(validator_runs_);
  t.extra["consensus_runs"] = static_cast<double>(consensus_runs_);
  t.extra["loop_messages"] = static_cast<double>(loop_messages(t.metrics));
  t.extra["announce_messages"] = static_cast<double>(announce_messages(t.metrics));
  return t;
}

}  // namespace

Transcript run_byzantine(const ByzRunConfig& cfg, ByzAdversary& adversary) {
  Sim sim(cfg, adversary);
  return sim.run();
}

}  // namespace rsim::byz
