#include "doctest.h"

#include "rsim/crash_adversary.hpp"
#include "rsim/monitors.hpp"
#include "rsim/trial.hpp"

using namespace rsim;

static TrialConfig crash_cfg(std::uint64_t n, std::string adv, std::uint64_t f, std::uint64_t seed) {
  TrialConfig c;
  c.protocol = "crash";
  c.n = n;
  c.N = 4 * n;
  c.seed = seed;
  c.adversary.name = std::move(adv);
  c.adversary.budget_f = f;
  return c;
}

TEST_CASE("trial config validation") {
  CHECK_THROWS_AS(crash_cfg(3, "none", 0, 1).validate(), ConfigError);
  CHECK_THROWS_AS(crash_cfg(8, "none", 8, 1).validate(), ConfigError);
  auto c = crash_cfg(8, "none", 7, 1);
  c.N = 7;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK_NOTHROW(crash_cfg(8, "uniform_random", 7, 1).validate());
  auto j = crash_cfg(16, "committee_assassin", 3, 9).to_json();
  auto back = TrialConfig::from_json(j);
  CHECK(back.to_json() == j);
  CHECK_THROWS_AS(TrialConfig::from_json(nlohmann::json{{"protocol", "crash"}}), ConfigError);
  CHECK_THROWS_AS(run_trial(crash_cfg(8, "nobody", 1, 1)), ConfigError);
}

TEST_CASE("failure-free crash trial at n=8") {
  auto t = run_trial(crash_cfg(8, "none", 0, 1));
  CHECK(t.success);
  CHECK(t.f_actual == 0);
  CHECK(t.metrics.rounds_total == 27);
  CHECK(check_unique_strong(t.outcome, 8).holds);
  for (auto& o : t.outcome) CHECK(o.new_id.has_value());
}

TEST_CASE("crash trials are deterministic") {
  auto a = run_trial(crash_cfg(16, "rebuild_forcer", 8, 5)).to_json().dump();
  auto b = run_trial(crash_cfg(16, "rebuild_forcer", 8, 5)).to_json().dump();
  CHECK(a == b);
  auto c = run_trial(crash_cfg(16, "rebuild_forcer", 8, 6)).to_json().dump();
  CHECK(a != c);
}

TEST_CASE("every strategy keeps uniqueness and the lemma monitors quiet") {
  for (auto name : crash::crash_adversary_names()) {
    for (std::uint64_t n : {4, 8, 16, 20}) {
      for (std::uint64_t f : {std::uint64_t{0}, std::uint64_t{1}, n / 2, n - 1}) {
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
          auto t = run_trial(crash_cfg(n, name, f, seed));
          INFO(name, " n=", n, " f=", f, " seed=", seed, " ", t.failure_cause);
          REQUIRE(t.success);
          CHECK(t.f_actual <= f);
        }
      }
    }
  }
}

TEST_CASE("uniform_random with f = n-1 spends its budget and still terminates") {
  auto t = run_trial(crash_cfg(16, "uniform_random", 15, 3));
  CHECK(t.success);
  CHECK(t.f_actual == 15);
}

TEST_CASE("assassin that can afford the committee forces a rebuild") {
  auto c = crash_cfg(64, "committee_assassin", 40, 2);
  c.overrides.p0 = 0.05;
  auto t = run_trial(c);
  CHECK(t.success);
  CHECK(t.f_actual > 0);
  CHECK(t.extra["rebuild_phases"] >= 1);
}

TEST_CASE("mid-send crash delivers exactly the chosen subset") {
  crash::CrashConfig cc;
  cc.n = 4;
  cc.N = 4;
  cc.seed = 1;
  crash::CrashSim sim(cc);
  sim.begin_round();
  crash::CrashDecision d;
  d.crash_now = {0};
  d.delivered_subset = {{0, {2}}};
  sim.finish_round(d);
  // everyone is a member at n=4; node 0's notification reached node 2 only
  auto got = [&](NodeIndex v) {
    auto in = sim.engine().inbox(v);
    return in.own.size() + in.common.size();
  };
  CHECK(got(2) == 4);
  CHECK(got(1) == 3);
  CHECK(got(0) == 0);
  CHECK(sim.engine().metrics().messages_total == 16);
  // three live senders reach the three live nodes, plus node 0 -> node 2
  CHECK(sim.engine().metrics().messages_delivered == 3 * 3 + 1);
}

TEST_CASE("manifest is complete") { CHECK_NOTHROW(check_manifest_complete()); }

TEST_CASE("outcome checks") {
  std::vector<NodeOutcome> ok{{{10}, 1, false}, {{20}, 2, false}, {{30}, 3, false}, {{40}, 4, false}};
  CHECK(check_unique_strong(ok, 4).holds);
  std::vector<NodeOutcome> dup{{{10}, 1, false}, {{20}, 2, false}, {{30}, 2, false}};
  auto v = check_unique_strong(dup, 3);
  CHECK_FALSE(v.holds);
  CHECK(v.witness.find("20") != std::string::npos);
  std::vector<NodeOutcome> zero{{{10}, 0, false}, {{20}, 1, false}, {{30}, 2, false}};
  CHECK_FALSE(check_unique_strong(zero, 3).holds);
  std::vector<NodeOutcome> ordered{{{10}, 1, false}, {{20}, 2, false}, {{30}, 3, false}};
  CHECK(check_order_preserving(ordered).holds);
  std::vector<NodeOutcome> swapped{{{10}, 2, false}, {{20}, 1, false}};
  CHECK_FALSE(check_order_preserving(swapped).holds);
  std::vector<NodeOutcome> single{{{10}, 5, false}};
  CHECK(check_order_preserving(single).holds);
}
