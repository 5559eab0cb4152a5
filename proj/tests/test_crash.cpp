#include "doctest.h"

#include <algorithm>
#include <set>

#include "rsim/crash.hpp"

using namespace rsim;
using namespace rsim::crash;

TEST_CASE("interval halving") {
  CHECK(bot({1, 8}) == Interval{1, 4});
  CHECK(bot({1, 5}) == Interval{1, 3});
  CHECK(bot({3, 4}) == Interval{3, 3});
  CHECK(top({1, 8}) == Interval{5, 8});
  CHECK(top({1, 5}) == Interval{4, 5});
  CHECK_THROWS_AS(bot({3, 3}), DegenerateInterval);
  CHECK_THROWS_AS(top({7, 7}), DegenerateInterval);
  for (std::uint32_t lo = 1; lo <= 20; ++lo) {
    for (std::uint32_t hi = lo + 1; hi <= 20; ++hi) {
      Interval I{lo, hi};
      CHECK(bot(I).size() + top(I).size() == I.size());
      CHECK(bot(I).hi + 1 == top(I).lo);
    }
  }
}

TEST_CASE("rank is 1-based over ascending ids") {
  std::vector<NodeId> s{{40}, {10}, {30}, {20}};
  CHECK(rank(NodeId{30}, s) == 3);
  std::vector<NodeId> one{{10}};
  CHECK(rank(NodeId{10}, one) == 1);
  std::vector<NodeId> two{{10}, {20}};
  CHECK_THROWS_AS(rank(NodeId{7}, two), NotMember);
}

TEST_CASE("election probability") {
  CHECK(ElectionRule::standard(1024).probability(0) == 1.0);
  CHECK(ElectionRule::standard(1 << 20).probability(0) == doctest::Approx(256.0 * 20 / (1 << 20)));
  CHECK(ElectionRule::standard(1 << 20).probability(1) == doctest::Approx(512.0 * 20 / (1 << 20)));
  ElectionRule strict{64, 0.5, false};
  CHECK(strict.probability(0) == 0.5);
  CHECK_THROWS_AS(strict.probability(2), ConfigError);
}

TEST_CASE("init_node starts at the root") {
  PrivateStream rng(1, 2);
  auto s = init_node(NodeId{9}, 1024, rng, ElectionRule::standard(1024));
  CHECK(s.I == Interval{1, 1024});
  CHECK(s.d == 0);
  CHECK(s.p == 0);
  CHECK(s.elected);
}

TEST_CASE("committee action: four nodes at the root") {
  std::vector<StatusReport> M{
      {{10}, {1, 4}, 0, 0}, {{20}, {1, 4}, 0, 0}, {{30}, {1, 4}, 0, 0}, {{40}, {1, 4}, 0, 0}};
  auto R = committee_action(M, 0);
  CHECK(R[0].I == Interval{1, 2});
  CHECK(R[0].d == 1);
  CHECK(R[1].I == Interval{1, 2});
  CHECK(R[2].I == Interval{3, 4});
  CHECK(R[2].d == 1);
  CHECK(R[3].I == Interval{3, 4});
}

TEST_CASE("committee action: single report") {
  std::vector<StatusReport> M{{{5}, {1, 4}, 0, 0}};
  auto R = committee_action(M, 3);
  CHECK(R[0].id == NodeId{5});
  CHECK(R[0].I == Interval{1, 2});
  CHECK(R[0].d == 1);
  CHECK(R[0].p == 3);
}

TEST_CASE("committee action: deeper reports are echoed with the member's p") {
  std::vector<StatusReport> M{{{1}, {1, 4}, 1, 0}, {{2}, {1, 2}, 2, 0}, {{3}, {3, 4}, 2, 1}};
  auto R = committee_action(M, 4);
  CHECK(R[1].I == Interval{1, 2});
  CHECK(R[1].d == 2);
  CHECK(R[1].p == 4);
  CHECK(R[2].I == Interval{3, 4});
  CHECK(R[2].d == 2);
  // the d=1 report sees one node already inside [1,2] and ranks first: 1 + 1 <= 2
  CHECK(R[0].I == Interval{1, 2});
  CHECK(R[0].d == 2);
}

TEST_CASE("committee action: a decided node at a shallower depth does not stall the others") {
  std::vector<StatusReport> M{{{1}, {3, 3}, 2, 0}, {{2}, {1, 2}, 3, 0}};
  auto R = committee_action(M, 0);
  CHECK(R[0].I == Interval{3, 3});
  CHECK(R[1].I == Interval{1, 1});
  CHECK(R[1].d == 4);
}

TEST_CASE("committee action: occupied bottom half pushes to the top") {
  std::vector<StatusReport> M{{{1}, {1, 4}, 1, 0}, {{2}, {1, 1}, 3, 0}, {{3}, {2, 2}, 3, 0}};
  auto R = committee_action(M, 0);
  CHECK(R[0].I == Interval{3, 4});
}

// Plain restatement of the committee rule for cross-checking the indexed implementation.
static std::vector<CommitteeResponse> reference_committee(const std::vector<StatusReport>& M, std::uint32_t p) {
  std::uint32_t dmin = UINT32_MAX;
  for (auto& r : M) {
    if (r.I.size() > 1) dmin = std::min(dmin, r.d);
  }
  std::vector<CommitteeResponse> out;
  for (auto& w : M) {
    if (w.d > dmin || w.I.size() == 1) {
      out.push_back({w.id, w.I, w.d, p});
      continue;
    }
    std::vector<NodeId> same;
    std::size_t inside = 0;
    for (auto& u : M) {
      if (u.I == w.I) same.push_back(u.id);
      if (bot(w.I).contains(u.I)) ++inside;
    }
    auto r = rank(w.id, same);
    out.push_back({w.id, inside + r <= bot(w.I).size() ? bot(w.I) : top(w.I), w.d + 1, p});
  }
  return out;
}

TEST_CASE("committee action agrees with the direct rule on random protocol states") {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    CrashConfig cfg;
    cfg.n = 8 + seed % 13;
    cfg.N = 4 * cfg.n;
    cfg.seed = seed;
    CrashSim sim(cfg);
    while (!sim.done()) {
      std::vector<StatusReport> M;
      for (auto& s : sim.states()) M.push_back({s.id, s.I, s.d, s.p});
      auto fast = committee_action(M, 1);
      auto slow = reference_committee(M, 1);
      for (std::size_t i = 0; i < M.size(); ++i) {
        REQUIRE(fast[i].I == slow[i].I);
        REQUIRE(fast[i].d == slow[i].d);
      }
      sim.begin_round();
      sim.finish_round({});
    }
  }
}

TEST_CASE("node action") {
  auto rule = ElectionRule::standard(64);
  PrivateStream rng(3, 3);
  SUBCASE("no responses raises p") {
    CrashNodeState s{{1}, {1, 64}, 0, 0, false, false};
    node_action({}, s, rng, rule);
    CHECK(s.p == 1);
    CHECK(s.elected);  // clamped to 1 at this size
  }
  SUBCASE("deepest, then leftmost response wins") {
    CrashNodeState s{{1}, {1, 4}, 1, 0, true, false};
    std::vector<CommitteeResponse> R{{{1}, {3, 4}, 2, 0}, {{1}, {1, 2}, 2, 0}, {{1}, {1, 4}, 1, 0}};
    node_action(R, s, rng, rule);
    CHECK(s.d == 2);
    CHECK(s.I == Interval{1, 2});
  }
  SUBCASE("decided nodes keep their interval") {
    CrashNodeState s{{1}, {3, 3}, 2, 0, true, false};
    std::vector<CommitteeResponse> R{{{1}, {1, 2}, 5, 2}};
    node_action(R, s, rng, rule);
    CHECK(s.I == Interval{3, 3});
    CHECK(s.d == 2);
    CHECK(s.p == 2);
  }
}

static std::set<std::uint64_t> run_clean(std::uint64_t n, std::uint64_t seed) {
  CrashConfig cfg;
  cfg.n = n;
  cfg.N = 4 * n;
  cfg.seed = seed;
  CrashSim sim(cfg);
  CHECK(sim.total_rounds() == 9 * ceil_log2(n));
  while (!sim.done()) {
    sim.begin_round();
    sim.finish_round({});
  }
  std::set<std::uint64_t> got;
  for (auto& o : sim.outcome()) {
    REQUIRE(o.new_id.has_value());
    got.insert(*o.new_id);
  }
  return got;
}

TEST_CASE("failure-free runs rename everyone uniquely") {
  for (std::uint64_t n : {2, 3, 4, 5, 7, 8, 13, 16, 33}) {
    auto got = run_clean(n, n);
    CHECK(got.size() == n);
    CHECK(*got.begin() >= 1);
    CHECK(*got.rbegin() <= n);
  }
}

TEST_CASE("crashing the whole committee raises every survivor's p") {
  CrashConfig cfg;
  cfg.n = 8;
  cfg.N = 8;
  cfg.seed = 11;
  cfg.election = {8, 0.25, true};
  // pick a seed where the initial committee is nonempty and not everyone
  for (;; ++cfg.seed) {
    CrashSim probe(cfg);
    auto k = std::count_if(probe.states().begin(), probe.states().end(), [](auto& s) { return s.elected; });
    if (k > 0 && k < 8) break;
  }
  CrashSim sim(cfg);
  std::vector<NodeIndex> members;
  for (NodeIndex v = 0; v < 8; ++v) {
    if (sim.states()[v].elected) members.push_back(v);
  }
  sim.begin_round();
  sim.finish_round({});
  sim.begin_round();
  CrashDecision kill;
  kill.crash_now = members;
  sim.finish_round(kill);
  sim.begin_round();
  sim.finish_round({});
  for (NodeIndex v = 0; v < 8; ++v) {
    if (sim.states()[v].crashed) continue;
    CHECK(sim.states()[v].p == 1);
    CHECK(sim.states()[v].d == 0);
  }
}
