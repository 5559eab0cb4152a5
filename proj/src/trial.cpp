#include "rsim/trial.hpp"

#include <cmath>

#include "rsim/byz_sim.hpp"
#include "rsim/crash.hpp"
#include "rsim/crash_adversary.hpp"
#include "rsim/monitors.hpp"

namespace rsim {

std::uint64_t byzantine_tolerance(std::uint64_t n, double epsilon) {
  const double bound = std::ceil((1.0 / 3.0 - epsilon) * static_cast<double>(n) - 1e-9);
  return bound < 1.0 ? 0 : static_cast<std::uint64_t>(bound) - 1;
}

void TrialConfig::validate() const {
  if (protocol != "crash" && protocol != "byzantine") throw ConfigError("unknown protocol '" + protocol + "'");
  if (n < 4) throw ConfigError("n must be at least 4");
  if (N < n) throw ConfigError("N must be at least n");
  if (overrides.p0 && !(*overrides.p0 > 0.0)) throw ConfigError("p0 override must be positive");
  if (protocol == "crash") {
    if (adversary.budget_f >= n) throw ConfigError("crash budget must be below n");
  } else {
    if (!(epsilon0 > 0.0 && epsilon0 < 1.0 / 3.0)) throw ConfigError("epsilon0 must lie in (0, 1/3)");
    if (adversary.budget_f > byzantine_tolerance(n, epsilon0)) {
      throw ConfigError("Byzantine budget " + std::to_string(adversary.budget_f) + " exceeds tolerance " +
                        std::to_string(byzantine_tolerance(n, epsilon0)));
    }
  }
}

TrialConfig TrialConfig::from_json(const nlohmann::json& j) {
  TrialConfig c;
  try {
    c.protocol = j.at("protocol").get<std::string>();
    c.n = j.at("n").get<std::uint64_t>();
    c.N = j.value("N", c.n);
    c.epsilon0 = j.value("epsilon0", 0.05);
    c.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("adversary")) {
      const auto& a = j.at("adversary");
      c.adversary.name = a.value("name", std::string("none"));
      c.adversary.budget_f = a.value("budget_f", std::uint64_t{0});
      if (a.contains("params")) c.adversary.params = a.at("params");
    }
    if (j.contains("overrides")) {
      const auto& o = j.at("overrides");
      if (o.contains("p0") && !o.at("p0").is_null()) c.overrides.p0 = o.at("p0").get<double>();
      c.overrides.clamp = o.value("clamp", true);
    }
    c.early_exit = j.value("early_exit", false);
    if (j.value("count", std::string("sent")) == "delivered") c.count_policy = CountPolicy::delivered;
    if (j.contains("log")) c.log = parse_log_level(j.at("log").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad trial config: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json TrialConfig::to_json() const {
  nlohmann::json j{{"protocol", protocol},
                   {"n", n},
                   {"N", N},
                   {"epsilon0", epsilon0},
                   {"seed", seed},
                   {"adversary", {{"name", adversary.name}, {"budget_f", adversary.budget_f}, {"params", adversary.params}}},
                   {"overrides", {{"p0", overrides.p0 ? nlohmann::json(*overrides.p0) : nlohmann::json(nullptr)},
                                  {"clamp", overrides.clamp}}}};
  if (early_exit) j["early_exit"] = true;
  if (count_policy == CountPolicy::delivered) j["count"] = "delivered";
  return j;
}

Transcript run_crash_trial(const TrialConfig& cfg) {
  cfg.validate();
  crash::CrashConfig cc;
  cc.n = cfg.n;
  cc.N = cfg.N;
  cc.seed = cfg.seed;
  cc.election = crash::ElectionRule::standard(cfg.n);
  if (cfg.overrides.p0) cc.election.base = *cfg.overrides.p0;
  cc.election.clamp = cfg.overrides.clamp;
  cc.early_exit = cfg.early_exit;
  cc.count_policy = cfg.count_policy;
  cc.log = cfg.log;
  crash::CrashSim sim(cc);
  auto adversary = crash::make_crash_adversary(cfg.adversary.name, cfg.adversary.budget_f, mix(cfg.seed, 0xadf),
                                               cfg.adversary.params);
  CrashMonitor monitor(cfg.n);
  monitor.start(sim.states());

  Transcript t;
  t.protocol = "crash";
  t.n = cfg.n;
  t.N = cfg.N;
  t.seed = cfg.seed;
  t.f_budget = cfg.adversary.budget_f;
  auto& committee = sim.engine().metrics().committee_size_history;
  while (!sim.done()) {
    sim.begin_round();
    if (sim.sub_round_of(sim.round()) == 1) {
      std::uint64_t k = 0;
      for (const auto& s : sim.states()) k += (!s.crashed && s.elected) ? 1 : 0;
      committee.push_back(k);
    }
    const auto decision = adversary->decide(sim.observe());
    sim.finish_round(decision);
    monitor.after_round(sim.round(), sim.states());
  }
  if (sim.crashes() > cfg.adversary.budget_f) {
    throw MonitorViolation("adversary " + adversary->name() + " exceeded its budget");
  }
  t.outcome = sim.outcome();
  t.metrics = sim.engine().metrics();
  t.events = std::move(sim.engine().events());
  monitor.finish(sim.states(), t.outcome, t.metrics.messages_total);
  t.verdicts = monitor.verdicts();
  t.f_actual = sim.crashes();
  t.success = t.monitor_failures() == 0;
  if (!t.success) {
    for (const auto& v : t.verdicts) {
      if (!v.holds) {
        t.failure_cause = v.lemma + ": " + v.witness;
        break;
      }
    }
  }
  std::uint32_t max_p = 0;
  for (const auto& s : sim.states()) max_p = std::max(max_p, s.p);
  t.extra["phases"] = sim.phases();
  t.extra["max_p"] = max_p;
  t.extra["rebuild_phases"] = static_cast<double>(monitor.rebuild_phases());
  return t;
}

Transcript run_byzantine_trial(const TrialConfig& cfg) {
  cfg.validate();
  std::string name = cfg.adversary.name;
  if (name == "none") {
    if (cfg.adversary.budget_f > 0) throw ConfigError("adversary 'none' cannot corrupt nodes");
    name = "silent";
  }
  auto adversary = byz::make_byz_adversary(name, mix(cfg.seed, 0xadf), cfg.adversary.params);
  byz::ByzRunConfig rc;
  rc.n = cfg.n;
  rc.N = cfg.N;
  rc.seed = cfg.seed;
  rc.epsilon0 = cfg.epsilon0;
  rc.p0 = cfg.overrides.p0;
  rc.clamp = cfg.overrides.clamp;
  rc.f = cfg.adversary.budget_f;
  rc.count_policy = cfg.count_policy;
  rc.log = cfg.log;
  return byz::run_byzantine(rc, *adversary);
}

Transcript run_trial(const TrialConfig& cfg) {
  if (cfg.protocol == "crash") return run_crash_trial(cfg);
  if (cfg.protocol == "byzantine") return run_byzantine_trial(cfg);
  throw ConfigError("unknown protocol '" + cfg.protocol + "'");
}

}  // namespace rsim
