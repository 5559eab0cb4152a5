#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"

#include "rsim/byz.hpp"
#include "rsim/byz_adversary.hpp"
#include "rsim/byz_contracts.hpp"
#include "rsim/byz_protocol.hpp"
#include "rsim/byz_sim.hpp"
#include "rsim/monitors.hpp"
#include "rsim/trial.hpp"

using namespace rsim;
using namespace rsim::byz;

static TrialConfig byz_cfg(std::uint64_t n, std::string adv, std::uint64_t f, std::uint64_t seed) {
  TrialConfig c;
  c.protocol = "byzantine";
  c.n = n;
  c.N = 5 * n * n;
  c.seed = seed;
  c.adversary.name = std::move(adv);
  c.adversary.budget_f = f;
  return c;
}

TEST_CASE("byzantine parameters") {
  auto p = ByzParams::make(32, 5120, 0.05);
  CHECK(p.p0 == 1.0);
  CHECK(p.c_g == doctest::Approx(0.925 * (2.0 / 3.0 + 0.05) * 32));
  CHECK(p.c_hat_g == 32.0);
  CHECK(p.f_bound == 9);
  CHECK(p.consensus_faults() == 10);
  CHECK(p.consensus_rounds() == 24);
  CHECK_THROWS_AS(ByzParams::make(32, 5120, 0.05, std::nullopt, false), ConfigError);

  auto q = ByzParams::make(512, 5 * 512 * 512, 0.05, 0.15);
  CHECK(q.p0 == 0.15);
  CHECK(q.c_g == doctest::Approx(0.925 * (2.0 / 3.0 + 0.05) * 0.15 * 512));
  CHECK(q.c_hat_g == doctest::Approx(4 * 0.15 * 512));
  CHECK(byzantine_tolerance(32, 0.05) == 9);
  CHECK(byzantine_tolerance(128, 0.05) == 36);
}

TEST_CASE("identity list and rank index") {
  IdentityList L(100);
  for (std::uint64_t i : {5, 17, 42}) L.set(i, true);
  CHECK(L.count(Segment{1, 100}) == 3);
  CHECK(L.count(Segment{6, 41}) == 1);
  CHECK(L.ones(Segment{1, 100}) == std::vector<std::uint32_t>{5, 17, 42});
  CHECK(L.rank(17) == 2);
  CHECK(L.rank(5) == 1);
  CHECK(L.rank(4) == 0);
  RankIndex idx(L);
  for (std::uint64_t i = 1; i <= 100; ++i) CHECK(idx.rank(i) == L.rank(i));

  IdentityList M = L;
  M.fill_leftmost(Segment{10, 50}, 3);
  CHECK(M.ones(Segment{10, 50}) == std::vector<std::uint32_t>{10, 11, 12});
  CHECK(M.equal_on(L, Segment{1, 9}));
  CHECK_FALSE(M.equal_on(L, Segment{1, 20}));
  CHECK(bot(Segment{1, 10}) == Segment{1, 5});
  CHECK(top(Segment{1, 10}) == Segment{6, 10});
}

TEST_CASE("segment hash is deterministic and order-insensitive") {
  SharedRandomness shared(11);
  SegmentHasher h(5120, shared);
  CHECK(h.width() == 8 * 13);
  IdentityList L(5120);
  for (std::uint64_t i : {3, 900, 4000}) L.set(i, true);
  const auto a = h.hash(1, L, Segment{1, 5120});
  CHECK(a == h.hash_positions(1, {3, 900, 4000}));
  CHECK(a.count == 3);
  CHECK(a != h.hash(2, L, Segment{1, 5120}));
  SegmentHasher again(5120, shared);
  CHECK(again.hash(1, L, Segment{1, 5120}) == a);
  L.set(901, true);
  CHECK(h.hash(1, L, Segment{1, 5120}) != a);
}

TEST_CASE("no fingerprint collisions among all subsets of an 8-position segment") {
  // Each seed hashes 256 distinct sets; the collision bound N/P is far below 1/(1000 * 256^2).
  std::uint64_t collisions = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    SharedRandomness shared(seed);
    SegmentHasher h(65536, shared);
    std::set<std::array<std::uint64_t, 3>> seen;
    for (std::uint32_t mask = 0; mask < 256; ++mask) {
      std::vector<std::uint32_t> ones;
      for (std::uint32_t i = 0; i < 8; ++i)
        if (mask >> i & 1U) ones.push_back(i + 1);
      if (!seen.insert(h.hash_positions(seed, ones).hash).second) ++collisions;
    }
  }
  CHECK(collisions == 0);
}

TEST_CASE("byzantine codec round trips within the bit budget") {
  const auto w = Widths::make(32, 5120);
  SharedRandomness shared(3);
  SegmentHasher h(5120, shared);
  const auto fp = h.hash_positions(4, {7, 8, 4000});
  std::vector<ByzMessage> ms{make_elect(NodeId{77}),          make_id(NodeId{5120}),
                             make_val(MessageType::val_init, fp), make_val(MessageType::val_echo, fp),
                             make_diff(true),                 make_new(std::uint64_t{32}),
                             make_new(std::nullopt),          make_cons_init(ConsensusLabel::support)};
  for (const auto& m : ms) {
    const auto bits = encode(m, w);
    CHECK(bits.size() == m.bits_each(w));
    CHECK(bits.size() <= w.bit_budget(m.kind));
    const auto d = decode_byz(bits, w);
    CHECK(d.kind == m.kind);
    CHECK(d.id == m.id);
    CHECK(d.bit == m.bit);
    CHECK(d.new_id == m.new_id);
    if (m.kind == MessageType::val_init || m.kind == MessageType::val_echo) CHECK(d.value == fp);
  }
  const auto echo = make_cons_echo({slot_of(3, ConsensusLabel::input), slot_of(9, ConsensusLabel::support)});
  CHECK(echo.logical_count() == 2);
  const auto d = decode_byz(encode(echo, w, 1, NodeId{444}), w);
  CHECK(d.ckind == ConsensusKind::echo);
  CHECK(d.label == ConsensusLabel::support);
  CHECK(d.id == NodeId{444});
  auto bits = encode(make_diff(false), w);
  bits.push_back(false);
  CHECK_THROWS_AS(decode_byz(bits, w), EncodeError);
}

TEST_CASE("validator examples") {
  Fingerprint x{{1, 0, 0}, 3}, y{{2, 0, 0}, 3};
  std::vector<Fingerprint> inputs(20, x);
  auto res = run_validator(20.0, inputs, {}, {});
  for (const auto& r : res) {
    CHECK(r.same);
    CHECK(r.out == x);
  }
  // Nine Byzantine members pushing y at everyone stay below c_g/2 = 10 echoes.
  std::vector<ValidatorVote> flood;
  for (NodeIndex b = 20; b < 29; ++b)
    for (NodeIndex v = 0; v < 20; ++v) flood.push_back({b, v, y});
  res = run_validator(20.0, inputs, flood, flood);
  for (const auto& r : res) {
    CHECK(r.out == x);
    CHECK(r.same);
  }
  CHECK(validator_echo({{x, 19}}, 20.0) == std::nullopt);
  CHECK(validator_echo({{x, 20}, {y, 9}}, 20.0) == x);
  const auto d = validator_decide(y, {{x, 11}, {y, 9}}, 20.0);
  CHECK(d.out == x);
  CHECK_FALSE(d.same);
  CHECK(validator_decide(y, {{x, 10}}, 20.0).out == y);
}

TEST_CASE("vote tally ignores equivocating senders") {
  VoteTally<int> t;
  std::vector<std::pair<NodeIndex, int>> shared{{0, 1}, {1, 1}, {2, 2}, {2, 3}};
  t.set_shared(shared);
  auto c = t.at({});
  CHECK(c[1] == 2);
  CHECK(c.count(2) == 0);
  std::vector<std::pair<NodeIndex, int>> own{{5, 2}, {6, 1}, {6, 2}, {0, 2}};
  c = t.at(own);
  CHECK(c[1] == 1);  // sender 0 spoke twice to this receiver
  CHECK(c[2] == 1);
}

static std::vector<bool> run_plain_consensus(const ByzParams& p, const std::vector<bool>& inputs) {
  auto cc = ConsensusConfig::from(p);
  cc.n = static_cast<std::uint32_t>(inputs.size());
  std::vector<ConsensusNode> nodes;
  for (bool b : inputs) nodes.emplace_back(cc, b);
  ConsensusShared shared(cc);
  for (std::uint64_t r = 1; r <= cc.rounds(); ++r) {
    std::vector<ByzMessage> sent;
    std::vector<NodeIndex> from;
    for (NodeIndex v = 0; v < nodes.size(); ++v) {
      auto s = nodes[v].sends(r);
      if (s.init) {
        sent.push_back(make_cons_init(*s.init));
        from.push_back(v);
      }
      if (!s.echoes.empty()) {
        sent.push_back(make_cons_echo(std::move(s.echoes)));
        from.push_back(v);
      }
    }
    shared.begin_round();
    for (std::size_t i = 0; i < sent.size(); ++i) shared.add(from[i], sent[i]);
    for (auto& n : nodes) n.receive(r, shared, {});
  }
  std::vector<bool> out;
  for (const auto& n : nodes) out.push_back(n.output());
  return out;
}

TEST_CASE("failure-free consensus") {
  const auto p = ByzParams::make(32, 5120, 0.05);
  CHECK(run_plain_consensus(p, std::vector<bool>(32, true)) == std::vector<bool>(32, true));
  CHECK(run_plain_consensus(p, std::vector<bool>(32, false)) == std::vector<bool>(32, false));
  for (std::size_t ones : {1, 11, 12, 20, 31}) {
    std::vector<bool> in(32, false);
    for (std::size_t i = 0; i < ones; ++i) in[i * 7 % 32] = true;
    const auto out = run_plain_consensus(p, in);
    CHECK(std::set<bool>(out.begin(), out.end()).size() == 1);
  }
}

TEST_CASE("contract checkers pass at safe thresholds and catch unsafe ones") {
  const auto p = ByzParams::make(29, 5 * 29 * 29, 0.05);
  const auto v = check_validator_contract(p, 20, 9, 40, 200, 1);
  CHECK(v.runs == 240);
  CHECK(v.unanimous_runs > 0);
  CHECK(v.same_runs > 0);
  CHECK(v.violations() == 0);
  auto weak = p;
  weak.c_g = 14.0;
  CHECK(check_validator_contract(weak, 20, 9, 0, 200, 1).violations() > 0);

  const auto q = ByzParams::make(4, 80, 0.05);
  const auto c = check_consensus_contract(q, 3, 1);
  CHECK(c.input_patterns == 8);
  CHECK(c.violations() == 0);
  auto unsafe = q;
  unsafe.c_g = 2.0;
  CHECK(check_consensus_contract(unsafe, 3, 1).violations() > 0);
}

TEST_CASE("committee lottery size matches its expectation") {
  // E|G| = p0 n over seeds; 3 sigma of the mean of 1000 binomial draws.
  const std::uint64_t n = 64;
  const double p0 = 0.3;
  double total = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    auto c = byz_cfg(n, "none", 0, seed);
    c.overrides.p0 = p0;
    total += run_trial(c).extra.at("correct_committee");
  }
  const double mean = total / 1000.0;
  const double sigma = std::sqrt(n * p0 * (1 - p0) / 1000.0);
  CHECK(std::abs(mean - n * p0) < 3 * sigma);
}

TEST_CASE("failure-free byzantine run renames in one iteration") {
  auto t = run_trial(byz_cfg(32, "none", 0, 4));
  CHECK(t.success);
  CHECK(t.extra.at("iterations") == 1);
  CHECK(t.monitor_failures() == 0);
  std::vector<std::pair<std::uint64_t, std::uint64_t>> pairs;
  for (const auto& o : t.outcome) pairs.emplace_back(o.original.value, *o.new_id);
  std::sort(pairs.begin(), pairs.end());
  for (std::size_t i = 0; i < pairs.size(); ++i) CHECK(pairs[i].second == i + 1);
}

TEST_CASE("a single list poisoner is isolated within the iteration bound") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    auto t = run_trial(byz_cfg(32, "list_poisoner", 1, seed));
    CHECK(t.success);
    CHECK(t.extra.at("list_divergence") == 1);
    CHECK(t.extra.at("iterations") <= 2 * ceil_log2(5120) + 1);
    CHECK(t.monitor_failures() == 0);
  }
  auto s = run_trial(byz_cfg(32, "silent", 3, 1));
  CHECK(s.success);
  CHECK(s.extra.at("list_divergence") == 0);
  CHECK(s.extra.at("iterations") == 1);
}

namespace {
// Unelected coalition members claim committee seats with their own and with borrowed ids.
class ElectForger final : public ByzAdversary {
 public:
  using ByzAdversary::ByzAdversary;
  std::string name() const override { return "test_elect_forger"; }
  void act(ByzContext& ctx) override {
    if (ctx.step().step != Step::elect) return ByzAdversary::act(ctx);
    const auto co = ctx.coalition();
    NodeIndex victim = 0;
    while (std::find(co.begin(), co.end(), victim) != co.end()) ++victim;
    for (auto b : co) {
      if (ctx.elected(b)) continue;
      ctx.send(b, ctx.everyone(), make_elect(ctx.id(b)));
      ctx.send(b, ctx.everyone(), make_elect(ctx.id(victim)));
    }
  }
};
}  // namespace

TEST_CASE("forged ELECT messages are rejected") {
  register_byz_adversary("test_elect_forger", [](std::uint64_t seed, const nlohmann::json&) {
    return std::make_unique<ElectForger>(seed);
  });
  std::uint64_t exercised = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto c = byz_cfg(32, "test_elect_forger", 4, seed);
    c.overrides.p0 = 0.8;
    auto t = run_trial(c);
    CHECK(t.monitor_failures() == 0);
    CHECK(t.extra.at("view_size_max") == t.extra.at("correct_committee"));
    if (t.extra.at("byzantine_committee") < 4) ++exercised;
  }
  CHECK(exercised > 0);
}

TEST_CASE("every byzantine strategy keeps renaming correct at n=32") {
  for (const auto& name : byz_adversary_names()) {
    if (name.rfind("test_", 0) == 0) continue;
    for (std::uint64_t f : {1, 3, 9}) {
      for (std::uint64_t seed = 0; seed < 2; ++seed) {
        auto t = run_trial(byz_cfg(32, name, f, seed));
        INFO(name, " f=", f, " seed=", seed, " ", t.failure_cause);
        CHECK(t.success);
        CHECK(t.monitor_failures() == 0);
        CHECK(t.extra.at("iterations") <= 4.0 * static_cast<double>(f) * ceil_log2(5120));
      }
    }
  }
}

TEST_CASE("byzantine trials replay identically") {
  const auto a = run_trial(byz_cfg(32, "validator_equivocator", 5, 9)).to_json().dump();
  CHECK(a == run_trial(byz_cfg(32, "validator_equivocator", 5, 9)).to_json().dump());
}

TEST_CASE("byzantine configuration errors") {
  CHECK_THROWS_AS(run_trial(byz_cfg(32, "nobody", 1, 1)), ConfigError);
  CHECK_THROWS_AS(run_trial(byz_cfg(32, "none", 1, 1)), ConfigError);
  CHECK_THROWS_AS(byz_cfg(32, "silent", 10, 1).validate(), ConfigError);
  CHECK_THROWS_AS(make_byz_adversary("nobody", 1), ConfigError);
}
