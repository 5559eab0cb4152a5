#include "rsim/byz_contracts.hpp"

#include <algorithm>
#include <array>
#include <map>
#include <memory>
#include <set>
#include <unordered_map>

#include "rsim/byz_adversary.hpp"

namespace rsim::byz {

std::vector<ValidatorResult> run_validator(double c_g, const std::vector<Fingerprint>& inputs,
                                           const std::vector<ValidatorVote>& init_votes,
                                           const std::vector<ValidatorVote>& echo_votes) {
  const auto g = static_cast<NodeIndex>(inputs.size());
  using Votes = std::vector<std::pair<NodeIndex, Fingerprint>>;
  auto own_votes = [g](const std::vector<ValidatorVote>& votes) {
    std::vector<Votes> own(g);
    for (const auto& v : votes)
      if (v.receiver < g) own[v.receiver].emplace_back(v.sender, v.value);
    return own;
  };

  VoteTally<Fingerprint> tally;
  Votes shared;
  for (NodeIndex i = 0; i < g; ++i) shared.emplace_back(i, inputs[i]);
  tally.set_shared(shared);
  const auto own_init = own_votes(init_votes);
  std::vector<std::optional<Fingerprint>> echo(g);
  for (NodeIndex v = 0; v < g; ++v) echo[v] = validator_echo(tally.at(own_init[v]), c_g);

  shared.clear();
  for (NodeIndex i = 0; i < g; ++i)
    if (echo[i]) shared.emplace_back(i, *echo[i]);
  tally.set_shared(shared);
  const auto own_echo = own_votes(echo_votes);
  std::vector<ValidatorResult> out(g);
  for (NodeIndex v = 0; v < g; ++v) out[v] = validator_decide(inputs[v], tally.at(own_echo[v]), c_g);
  return out;
}

namespace {

void judge(ValidatorContractReport& rep, const std::vector<Fingerprint>& inputs,
           const std::vector<ValidatorResult>& res, const std::string& label) {
  ++rep.runs;
  auto note = [&](const std::string& what) {
    if (rep.witness.empty()) rep.witness = label + ": " + what;
  };
  const std::set<Fingerprint> in_set(inputs.begin(), inputs.end());
  bool any_same = false;
  for (std::size_t v = 0; v < res.size(); ++v) {
    if (!in_set.count(res[v].out)) {
      ++rep.validity_out;
      note("member " + std::to_string(v) + " output a value nobody correct proposed");
    }
    any_same = any_same || res[v].same;
  }
  if (in_set.size() == 1) {
    ++rep.unanimous_runs;
    for (std::size_t v = 0; v < res.size(); ++v) {
      if (!res[v].same || res[v].out != inputs[0]) {
        ++rep.validity_unanimous;
        note("unanimous input not returned with same=1 at member " + std::to_string(v));
        break;
      }
    }
  }
  if (any_same) {
    ++rep.same_runs;
    for (std::size_t v = 1; v < res.size(); ++v) {
      if (res[v].out != res[0].out) {
        ++rep.weak_agreement;
        note("same=1 observed but members 0 and " + std::to_string(v) + " disagree");
        break;
      }
    }
  }
}

// Just enough of a protocol round for a Byzantine strategy to act in the validator steps.
class ValidatorContext final : public ByzContext {
 public:
  ValidatorContext(const ByzParams& p, const SegmentHasher& hasher, std::vector<NodeId> ids,
                   std::vector<IdentityList> lists, std::uint32_t correct)
      : params_(p), hasher_(hasher), ids_(std::move(ids)), lists_(std::move(lists)), inbox_(ids_.size()) {
    for (NodeIndex v = 0; v < ids_.size(); ++v) {
      everyone_.push_back(v);
      (v < correct ? correct_ : coalition_).push_back(v);
    }
  }

  void begin(Step s) {
    step_.step = s;
    step_.iteration = 1;
    step_.segment = Segment{1, static_cast<std::uint32_t>(params_.N)};
    sent_.clear();
  }
  void deliver_init(const std::vector<Fingerprint>& inputs) {
    for (auto b : coalition_) {
      inbox_[b].clear();
      for (NodeIndex v = 0; v < inputs.size(); ++v) inbox_[b].emplace_back(v, make_val(MessageType::val_init, inputs[v]));
    }
  }
  const std::vector<ValidatorVote>& sent() const { return sent_; }

  const StepInfo& step() const override { return step_; }
  const ByzParams& params() const override { return params_; }
  std::span<const NodeIndex> coalition() const override { return coalition_; }
  std::span<const NodeIndex> everyone() const override { return everyone_; }
  NodeId id(NodeIndex v) const override { return ids_[v]; }
  bool elected(NodeIndex) const override { return true; }
  std::span<const NodeIndex> correct_members() const override { return correct_; }
  std::span<const NodeIndex> view(NodeIndex) const override { return everyone_; }
  std::span<const std::pair<NodeIndex, ByzMessage>> inbox(NodeIndex b) const override { return inbox_[b]; }
  const IdentityList& list(NodeIndex b) const override { return lists_[b]; }
  Fingerprint fingerprint(const IdentityList& L) const override {
    return hasher_.hash(step_.iteration, L, step_.segment);
  }
  void send(NodeIndex b, std::span<const NodeIndex> to, ByzMessage m) override {
    for (auto r : to) record(b, r, m);
  }
  void send_each(NodeIndex b, std::span<const NodeIndex> to, std::span<const ByzMessage> m) override {
    for (std::size_t k = 0; k < to.size(); ++k) record(b, to[k], m[k]);
  }

 private:
  void record(NodeIndex b, NodeIndex r, const ByzMessage& m) {
    const bool wanted = m.kind == (step_.step == Step::val_init ? MessageType::val_init : MessageType::val_echo);
    if (wanted && r < correct_.size()) sent_.push_back({b, r, m.value});
  }

  const ByzParams& params_;
  const SegmentHasher& hasher_;
  StepInfo step_;
  std::vector<NodeId> ids_;
  std::vector<IdentityList> lists_;
  std::vector<NodeIndex> everyone_, correct_, coalition_;
  std::vector<std::vector<std::pair<NodeIndex, ByzMessage>>> inbox_;
  std::vector<ValidatorVote> sent_;
};

Fingerprint random_value(PrivateStream& rng) {
  Fingerprint f;
  for (auto& h : f.hash) h = rng.next();
  f.count = rng.below(1000);
  return f;
}

}  // namespace

ValidatorContractReport check_validator_contract(const ByzParams& params, std::uint32_t correct, std::uint32_t byzantine,
                                                 std::uint64_t equivocator_runs, std::uint64_t random_runs,
                                                 std::uint64_t seed) {
  ValidatorContractReport rep;
  const std::uint32_t total = correct + byzantine;

  for (std::uint64_t run = 0; run < equivocator_runs; ++run) {
    PrivateStream rng(mix(seed, 0x657175ULL), run);
    SharedRandomness shared(mix(seed, run));
    SegmentHasher hasher(params.N, shared);
    std::set<std::uint64_t> taken;
    std::vector<NodeId> ids;
    while (ids.size() < total) {
      const auto x = 1 + rng.below(params.N);
      if (taken.insert(x).second) ids.push_back(NodeId{x});
    }
    // Correct members hold every correct id; each coalition id reaches a member with probability q.
    const double q = std::array<double, 4>{0.0, 1.0, 0.5, rng.uniform()}[run % 4];
    std::vector<IdentityList> lists(total, IdentityList(params.N));
    for (NodeIndex v = 0; v < total; ++v) {
      for (NodeIndex u = 0; u < correct; ++u) lists[v].set(ids[u].value, true);
      if (v < correct)
        for (NodeIndex b = correct; b < total; ++b)
          if (rng.bernoulli(q)) lists[v].set(ids[b].value, true);
    }
    ValidatorContext ctx(params, hasher, ids, lists, correct);
    std::vector<Fingerprint> inputs;
    for (NodeIndex v = 0; v < correct; ++v) inputs.push_back(ctx.fingerprint(lists[v]));

    auto adv = make_byz_adversary("validator_equivocator", mix(seed, 0x76616cULL, run));
    ctx.begin(Step::val_init);
    adv->act(ctx);
    const auto init_votes = ctx.sent();
    ctx.deliver_init(inputs);
    ctx.begin(Step::val_echo);
    adv->act(ctx);
    const auto echo_votes = ctx.sent();
    judge(rep, inputs, run_validator(params.c_g, inputs, init_votes, echo_votes), "equivocator run " + std::to_string(run));
  }

  for (std::uint64_t run = 0; run < random_runs; ++run) {
    PrivateStream rng(mix(seed, 0x726e64ULL), run);
    std::vector<Fingerprint> pool{random_value(rng), random_value(rng), random_value(rng)};
    const std::uint64_t kinds = std::array<std::uint64_t, 4>{1, 2, 2, 3}[rng.below(4)];
    std::vector<Fingerprint> inputs(correct);
    const double major = rng.uniform();
    for (auto& in : inputs) in = kinds == 1 || rng.bernoulli(major) ? pool[0] : pool[1 + rng.below(kinds - 1)];

    // Coordinated runs split receivers into groups that each get one target value per round;
    // otherwise every (sender, receiver) pair picks silence, one value, or two values.
    const bool coordinated = rng.below(2) == 0;
    std::vector<std::uint64_t> group(correct);
    for (auto& gr : group) gr = rng.below(3);
    auto pick = [&] { return rng.below(5) == 0 ? random_value(rng) : pool[rng.below(pool.size())]; };
    auto votes = [&] {
      std::vector<ValidatorVote> out;
      std::array<Fingerprint, 3> target{pick(), pick(), pick()};
      for (NodeIndex b = correct; b < total; ++b) {
        for (NodeIndex v = 0; v < correct; ++v) {
          if (coordinated) {
            if (rng.below(10) != 0) out.push_back({b, v, target[group[v]]});
            continue;
          }
          const auto k = rng.below(4);
          if (k >= 1) out.push_back({b, v, pick()});
          if (k == 3) out.push_back({b, v, pick()});
        }
      }
      return out;
    };
    const auto init_votes = votes();
    const auto echo_votes = votes();
    judge(rep, inputs, run_validator(params.c_g, inputs, init_votes, echo_votes), "random run " + std::to_string(run));
  }
  return rep;
}

namespace {

struct GlobalState {
  ConsensusShared shared;
  std::vector<ConsensusNode> nodes;
};

std::string key_of(const GlobalState& s) {
  std::string k = s.shared.state_key();
  for (const auto& n : s.nodes) {
    const auto nk = n.state_key();
    k += std::to_string(nk.size());
    k.push_back(':');
    k += nk;
  }
  return k;
}

}  // namespace

ConsensusContractReport check_consensus_contract(const ByzParams& params, std::uint32_t correct,
                                                 std::uint32_t byzantine) {
  ConsensusContractReport rep;
  ConsensusConfig cc = ConsensusConfig::from(params);
  cc.n = correct + byzantine;
  constexpr unsigned kChoiceBits = 3;
  const std::uint64_t choices = 1ULL << (kChoiceBits * byzantine);

  std::vector<std::uint32_t> correct_slots;
  for (NodeIndex v = 0; v < correct; ++v) {
    correct_slots.push_back(slot_of(v, ConsensusLabel::input));
    correct_slots.push_back(slot_of(v, ConsensusLabel::support));
  }
  const ByzMessage init_input = make_cons_init(ConsensusLabel::input);
  const ByzMessage init_support = make_cons_init(ConsensusLabel::support);
  const ByzMessage echo_correct = make_cons_echo(correct_slots);
  std::vector<ByzMessage> echo_own_input, echo_own_support;
  for (NodeIndex j = 0; j < byzantine; ++j) {
    echo_own_input.push_back(make_cons_echo({slot_of(correct + j, ConsensusLabel::input)}));
    echo_own_support.push_back(make_cons_echo({slot_of(correct + j, ConsensusLabel::support)}));
  }

  for (std::uint64_t pattern = 0; pattern < (1ULL << correct); ++pattern) {
    ++rep.input_patterns;
    std::unordered_map<std::string, GlobalState> layer;
    {
      GlobalState s0{ConsensusShared(cc), {}};
      for (NodeIndex v = 0; v < correct; ++v) s0.nodes.emplace_back(cc, ((pattern >> v) & 1U) != 0);
      layer.emplace(key_of(s0), std::move(s0));
    }
    for (std::uint64_t r = 1; r <= cc.rounds(); ++r) {
      std::unordered_map<std::string, GlobalState> next;
      for (auto& [key, st] : layer) {
        GlobalState base = st;
        std::vector<ByzMessage> sent;
        std::vector<NodeIndex> senders;
        for (NodeIndex v = 0; v < correct; ++v) {
          auto s = base.nodes[v].sends(r);
          if (s.init) {
            sent.push_back(make_cons_init(*s.init));
            senders.push_back(v);
          }
          if (!s.echoes.empty()) {
            sent.push_back(make_cons_echo(std::move(s.echoes)));
            senders.push_back(v);
          }
        }
        base.shared.begin_round();
        for (std::size_t i = 0; i < sent.size(); ++i) base.shared.add(senders[i], sent[i]);

        // Receivers react independently to their private deliveries.
        std::vector<std::vector<ConsensusNode>> options(correct);
        for (NodeIndex v = 0; v < correct; ++v) {
          std::set<std::string> seen;
          for (std::uint64_t c = 0; c < choices; ++c) {
            std::vector<Mail> own;
            for (NodeIndex j = 0; j < byzantine; ++j) {
              const auto bits = (c >> (kChoiceBits * j)) & ((1U << kChoiceBits) - 1);
              const NodeIndex b = correct + j;
              if (bits & 1U) own.push_back({b, &init_input});
              if (bits & 2U) own.push_back({b, &init_support});
              if (bits & 4U) {
                own.push_back({b, &echo_own_input[j]});
                own.push_back({b, &echo_own_support[j]});
                own.push_back({b, &echo_correct});
              }
            }
            ConsensusNode node = base.nodes[v];
            node.receive(r, base.shared, own);
            if (seen.insert(node.state_key()).second) options[v].push_back(std::move(node));
          }
        }
        std::vector<std::size_t> pick(correct, 0);
        while (true) {
          GlobalState s{base.shared, {}};
          for (NodeIndex v = 0; v < correct; ++v) s.nodes.push_back(options[v][pick[v]]);
          auto k = key_of(s);
          next.try_emplace(std::move(k), std::move(s));
          NodeIndex v = 0;
          while (v < correct && ++pick[v] == options[v].size()) pick[v++] = 0;
          if (v == correct) break;
        }
      }
      rep.states_explored += next.size();
      layer = std::move(next);
    }

    rep.final_states += layer.size();
    const bool unanimous = pattern == 0 || pattern == (1ULL << correct) - 1;
    for (const auto& [key, st] : layer) {
      const bool first = st.nodes[0].output();
      bool agree = true;
      for (const auto& n : st.nodes) agree = agree && n.output() == first;
      if (!agree) {
        ++rep.agreement;
        if (rep.witness.empty()) rep.witness = "inputs " + std::to_string(pattern) + ": correct members disagree";
      }
      if (unanimous) {
        const bool want = pattern != 0;
        bool valid = true;
        for (const auto& n : st.nodes) valid = valid && n.output() == want;
        if (!valid) {
          ++rep.validity;
          if (rep.witness.empty()) rep.witness = "inputs " + std::to_string(pattern) + ": unanimous input not decided";
        }
      }
    }
  }
  return rep;
}

}  // namespace rsim::byz
