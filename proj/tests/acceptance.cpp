// Acceptance suite: one PASS/FAIL line per criterion. Tolerances are fixed below.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "rsim/byz.hpp"
#include "rsim/byz_adversary.hpp"
#include "rsim/byz_contracts.hpp"
#include "rsim/crash_adversary.hpp"
#include "rsim/harness.hpp"
#include "rsim/monitors.hpp"
#include "rsim/oracle.hpp"

using namespace rsim;

namespace {

constexpr std::uint64_t kCrashSeeds = 100;
constexpr double kCrashGridSeconds = 300.0;
constexpr double kOracleSeconds = 600.0;
constexpr std::uint64_t kScalingSeeds = 20;
constexpr double kFreeScalingSpread = 2.0;
constexpr double kAssassinScalingSpread = 3.0;
constexpr std::uint64_t kByzSeeds = 100;
constexpr double kByzSuccessRate = 0.99;
constexpr std::uint64_t kValidatorRandomPatterns = 1000;
constexpr std::uint64_t kValidatorEquivocatorRuns = 200;
constexpr std::uint64_t kMessageScalingSeeds = 50;
constexpr double kLoopGrowthPer4xF = 4.0;
constexpr double kAnnounceSpread = 2.0;

struct Result {
  bool pass = true;
  std::string detail;
};

using Clock = std::chrono::steady_clock;
double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string digest(const std::string& s) { return fmt("%016zx", std::hash<std::string>{}(s)); }

std::filesystem::path g_artifacts = "acceptance_artifacts";

void save(const std::string& name, const std::string& body) {
  std::filesystem::create_directories(g_artifacts);
  std::ofstream(g_artifacts / name, std::ios::binary) << body;
}

std::optional<std::string> load(const std::string& name) {
  std::ifstream in(g_artifacts / name, std::ios::binary);
  if (!in) return std::nullopt;
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Grids shared by several criteria run at most once per process.
struct Grid {
  SweepResult result;
  double seconds = 0;
};

SweepSpec crash_grid_spec() {
  SweepSpec s;
  s.protocol = "crash";
  s.n_values = {4, 8, 16, 64, 256};
  s.f_values = {{"0"}, {"1"}, {"n/8"}, {"n/2"}, {"n-1"}};
  s.adversaries = crash::crash_adversary_names();
  s.trials_per_cell = kCrashSeeds;
  return s;
}

SweepSpec byz_grid_spec() {
  SweepSpec s;
  s.protocol = "byzantine";
  s.n_values = {32, 64, 128};
  s.f_values = {{"0"}, {"1"}, {"n/10"}, {"f_bound"}};
  s.adversaries.clear();
  for (const auto& a : byz::byz_adversary_names()) s.adversaries.push_back(a);
  s.trials_per_cell = kByzSeeds;
  s.N = NValue{5, 2, std::nullopt};
  s.epsilon0 = 0.05;
  return s;
}

Grid run_grid(const SweepSpec& spec) {
  const auto t0 = Clock::now();
  Grid g{run_sweep(spec), 0};
  g.seconds = since(t0);
  return g;
}

const Grid& crash_grid() {
  static const Grid g = [] {
    auto grid = run_grid(crash_grid_spec());
    save("crash_grid_raw.csv", grid.result.raw_csv());
    return grid;
  }();
  return g;
}

const Grid& byz_grid() {
  static const Grid g = [] {
    auto grid = run_grid(byz_grid_spec());
    save("byz_grid_raw.csv", grid.result.raw_csv());
    return grid;
  }();
  return g;
}

Result criterion1() {
  const auto& g = crash_grid();
  std::uint64_t bad = 0, wrong_rounds = 0;
  std::string first;
  for (const auto& r : g.result.rows) {
    const auto& t = r.transcript;
    const std::uint64_t want = 9ULL * ceil_log2(t.n);
    const bool ids_ok = t.success;
    const bool rounds_ok = t.metrics.rounds_total == want && t.extra.at("phases") == 3.0 * ceil_log2(t.n);
    if (!ids_ok) ++bad;
    if (!rounds_ok) ++wrong_rounds;
    if ((!ids_ok || !rounds_ok) && first.empty())
      first = fmt(" first: n=%llu f=%llu %s seed=%llu %s", (unsigned long long)t.n, (unsigned long long)t.f_budget,
                  r.adversary.c_str(), (unsigned long long)t.seed, t.failure_cause.c_str());
  }
  Result res;
  res.pass = bad == 0 && wrong_rounds == 0 && g.seconds < kCrashGridSeconds;
  res.detail = fmt("%zu trials in %zu cells, %llu with bad ids, %llu with wrong round count, %.1fs (limit %.0fs)",
                   g.result.rows.size(), g.result.cells.size(), (unsigned long long)bad,
                   (unsigned long long)wrong_rounds, g.seconds, kCrashGridSeconds) +
               first;
  return res;
}

Result criterion2() {
  check_manifest_complete();
  const auto& g = crash_grid();
  std::map<std::string, std::uint64_t> fails;
  const char* tags[] = {lemma::no_crash_increasing_height, lemma::processor_less_interval,
                        lemma::crash_rebuild_committee, lemma::bounded_difference_k};
  for (const char* tag : tags) fails[tag] = 0;
  std::uint64_t rebuilds = 0;
  for (const auto& r : g.result.rows) {
    for (const auto& v : r.transcript.verdicts)
      if (!v.holds && fails.count(v.lemma)) ++fails[v.lemma];
    rebuilds += r.transcript.extra.at("rebuild_phases") > 0 ? 1 : 0;
  }
  Result res;
  std::string parts;
  for (const auto& [tag, k] : fails) {
    res.pass = res.pass && k == 0;
    parts += fmt("%s%s=%llu", parts.empty() ? "" : ", ", tag.c_str(), (unsigned long long)k);
  }
  res.detail = "failing checkpoints: " + parts + fmt("; %llu trials exercised a committee rebuild", (unsigned long long)rebuilds);
  return res;
}

Result criterion3() {
  const auto t0 = Clock::now();
  const auto clean = exhaustive_crash_oracle(4);
  OracleOptions mutated;
  mutated.mutation = crash::Mutation::rank_off_by_one;
  mutated.stop_at_first = true;
  const auto caught = exhaustive_crash_oracle(4, mutated);
  const double secs = since(t0);
  Result res;
  res.pass = clean.holds && clean.violations == 0 && caught.violations > 0 && secs < kOracleSeconds;
  res.detail = fmt("n=4: %llu states, %llu executions, %llu violations; rank off-by-one caught: %s; %.1fs",
                   (unsigned long long)clean.states, (unsigned long long)clean.executions,
                   (unsigned long long)clean.violations, caught.violations > 0 ? "yes" : "no", secs);
  return res;
}

Result criterion4() {
  SweepSpec free;
  free.protocol = "crash";
  free.n_values = {64, 128, 256, 512, 1024};
  free.f_values = {{"0"}};
  free.adversaries = {"none"};
  free.trials_per_cell = kScalingSeeds;
  const auto a = run_sweep(free);

  SweepSpec assassin;
  assassin.protocol = "crash";
  assassin.n_values = {256};
  assassin.f_values = {{"8"}, {"32"}, {"128"}};
  assassin.adversaries = {"committee_assassin"};
  assassin.trials_per_cell = kScalingSeeds;
  const auto b = run_sweep(assassin);

  std::uint64_t over_cap = 0;
  double worst_cap = 0;
  auto cap_check = [&](const SweepResult& s) {
    for (const auto& r : s.rows) {
      const auto& t = r.transcript;
      const double cap = kCrashMessageCap * double(t.n) * double(t.n) * ceil_log2(t.n);
      worst_cap = std::max(worst_cap, double(t.metrics.messages_total) / cap);
      over_cap += double(t.metrics.messages_total) > cap ? 1 : 0;
    }
  };
  cap_check(a);
  cap_check(b);

  std::vector<double> free_coef;
  std::string free_list;
  for (const auto& c : a.summaries) {
    const double n = double(c.cell.n), ln = std::log2(n);
    free_coef.push_back(c.messages.mean / (n * ln * ln));
    free_list += fmt("%s%.0f:%.2f", free_list.empty() ? "" : " ", n, free_coef.back());
  }
  std::vector<double> as_coef;
  std::string as_list;
  for (std::size_t c = 0; c < b.cells.size(); ++c) {
    double sum = 0;
    for (std::uint64_t k = 0; k < kScalingSeeds; ++k) {
      const auto& t = b.rows[c * kScalingSeeds + k].transcript;
      const double n = double(t.n), ln = std::log2(n);
      sum += double(t.metrics.messages_total) / ((double(t.f_actual) + ln) * n * ln);
    }
    as_coef.push_back(sum / double(kScalingSeeds));
    as_list += fmt("%s%llu:%.2f", as_list.empty() ? "" : " ", (unsigned long long)b.cells[c].f, as_coef.back());
  }
  auto spread = [](const std::vector<double>& v) {
    return *std::max_element(v.begin(), v.end()) / *std::min_element(v.begin(), v.end());
  };
  std::vector<FitPoint> pts;
  for (const auto& r : a.rows)
    pts.push_back({double(r.transcript.n), 0, double(r.transcript.N), double(r.transcript.metrics.messages_total)});
  const auto fit = fit_scaling(pts, "n_log2n");

  Result res;
  const double fs = spread(free_coef), as = spread(as_coef);
  res.pass = fs < kFreeScalingSpread && as < kAssassinScalingSpread && over_cap == 0;
  res.detail = fmt("f=0 messages/(n log^2 n) by n [%s] spread %.2f (limit %.1f), fit c=%.2f residual %.2f; "
                   "assassin messages/((f+log n) n log n) by f [%s] spread %.2f (limit %.1f); "
                   "trials over %.0f n^2 log n: %llu (max ratio %.3f)",
                   free_list.c_str(), fs, kFreeScalingSpread, fit.coefficient, fit.max_relative_residual,
                   as_list.c_str(), as, kAssassinScalingSpread, kCrashMessageCap, (unsigned long long)over_cap,
                   worst_cap);
  return res;
}

Result criterion5() {
  const auto& g = byz_grid();
  Result res;
  std::uint64_t failed = 0, unbudgeted = 0;
  double worst = 1.0;
  std::string worst_cell;
  for (const auto& s : g.result.summaries) {
    if (s.success_rate < worst) {
      worst = s.success_rate;
      worst_cell = fmt(" (n=%llu f=%llu %s)", (unsigned long long)s.cell.n, (unsigned long long)s.cell.f,
                       s.cell.adversary.c_str());
    }
    res.pass = res.pass && s.success_rate >= kByzSuccessRate;
  }
  std::map<std::string, std::uint64_t> causes;
  for (const auto& r : g.result.rows) {
    const auto& t = r.transcript;
    if (t.success) continue;
    ++failed;
    ++causes[t.failure_cause];
    if (t.failure_cause != "committee-tail" && t.failure_cause != "hash-collision") ++unbudgeted;
  }
  res.pass = res.pass && unbudgeted == 0;
  std::string cause_list;
  for (const auto& [c, k] : causes) cause_list += fmt(" %s=%llu", c.c_str(), (unsigned long long)k);
  res.detail = fmt("%zu trials in %zu cells, %.1fs; lowest cell success %.3f%s (limit %.2f); %llu failed trials,"
                   " %llu without a budgeted cause%s",
                   g.result.rows.size(), g.result.cells.size(), g.seconds, worst, worst_cell.c_str(), kByzSuccessRate,
                   (unsigned long long)failed, (unsigned long long)unbudgeted, cause_list.c_str());
  return res;
}

Result criterion6() {
  const auto& g = byz_grid();
  std::uint64_t over = 0, f0_not_one = 0, monitor = 0;
  double worst = 0;
  for (const auto& r : g.result.rows) {
    const auto& t = r.transcript;
    const double it = t.extra.at("iterations");
    const double bound = 4.0 * double(std::max<std::uint64_t>(t.f_actual, 1)) * std::log2(double(t.N));
    worst = std::max(worst, it / bound);
    over += it > bound ? 1 : 0;
    if (t.f_budget == 0 && it != 1.0) ++f0_not_one;
    for (const auto& v : t.verdicts) monitor += !v.holds && v.lemma == lemma::byz_iteration_bound ? 1 : 0;
  }
  Result res;
  res.pass = over == 0 && f0_not_one == 0 && monitor == 0;
  res.detail = fmt("trials over 4 max(f,1) log2 N: %llu (max ratio %.3f); f=0 trials not at 1 iteration: %llu",
                   (unsigned long long)over, worst, (unsigned long long)f0_not_one);
  return res;
}

Result criterion7() {
  const auto& g = byz_grid();
  std::uint64_t bad = 0, trials = 0;
  for (const auto& r : g.result.rows) {
    bool hit = false;
    for (const auto& v : r.transcript.verdicts) hit = hit || (!v.holds && v.lemma == lemma::byz_lockstep);
    bad += hit ? 1 : 0;
    ++trials;
  }
  Result res;
  res.pass = bad == 0;
  res.detail = fmt("%llu of %llu trials broke lockstep or the partition of [1,N]", (unsigned long long)bad,
                   (unsigned long long)trials);
  return res;
}

Result criterion8() {
  const auto t0 = Clock::now();
  const auto vp = byz::ByzParams::make(29, 5 * 29 * 29, 0.05);
  const auto v = byz::check_validator_contract(vp, 20, 9, kValidatorEquivocatorRuns, kValidatorRandomPatterns, 8);
  const auto cp = byz::ByzParams::make(5, 125, 0.05);
  const auto c = byz::check_consensus_contract(cp, 4, 1);
  Result res;
  res.pass = v.violations() == 0 && c.violations() == 0;
  res.detail = fmt("validator (c_g=%.2f, |G|=20, |B|=9): %llu runs (%llu unanimous, %llu with same=1), violations "
                   "validity1=%llu validity2=%llu weak-agreement=%llu; consensus (c_g=%.2f, t=%llu, %llu rounds, "
                   "|G|=4, |B|=1): %llu input patterns, %llu states, agreement=%llu validity=%llu; %.1fs",
                   vp.c_g, (unsigned long long)v.runs, (unsigned long long)v.unanimous_runs,
                   (unsigned long long)v.same_runs, (unsigned long long)v.validity_out,
                   (unsigned long long)v.validity_unanimous, (unsigned long long)v.weak_agreement, cp.c_g,
                   (unsigned long long)cp.consensus_faults(), (unsigned long long)cp.consensus_rounds(),
                   (unsigned long long)c.input_patterns, (unsigned long long)c.states_explored,
                   (unsigned long long)c.agreement, (unsigned long long)c.validity, since(t0));
  if (!v.witness.empty()) res.detail += "; " + v.witness;
  if (!c.witness.empty()) res.detail += "; " + c.witness;
  return res;
}

Result criterion9() {
  SweepSpec s;
  s.protocol = "byzantine";
  s.n_values = {512};
  s.f_values = {{"1"}, {"4"}, {"16"}};
  s.adversaries = {"list_poisoner"};
  s.trials_per_cell = kMessageScalingSeeds;
  s.N = NValue{5, 2, std::nullopt};
  s.overrides.p0 = 0.15;
  const auto r = run_sweep(s);
  std::vector<double> loop(3, 0), ann_ratio(3, 0), committee(3, 0);
  double worst_trial = 0;
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::uint64_t k = 0; k < kMessageScalingSeeds; ++k) {
      const auto& t = r.rows[c * kMessageScalingSeeds + k].transcript;
      loop[c] += t.extra.at("loop_messages");
      const double ratio = t.extra.at("announce_messages") / (double(t.n) * t.extra.at("committee_size"));
      ann_ratio[c] += ratio;
      worst_trial = std::max(worst_trial, std::max(ratio, 1.0 / ratio));
      committee[c] += t.extra.at("committee_size");
    }
    loop[c] /= kMessageScalingSeeds;
    ann_ratio[c] /= kMessageScalingSeeds;
    committee[c] /= kMessageScalingSeeds;
  }
  const double g1 = loop[1] / loop[0], g2 = loop[2] / loop[1];
  bool ann_ok = true;
  for (double a : ann_ratio) ann_ok = ann_ok && a <= kAnnounceSpread && a >= 1.0 / kAnnounceSpread;
  Result res;
  res.pass = g1 <= kLoopGrowthPer4xF && g2 <= kLoopGrowthPer4xF && ann_ok;
  res.detail = fmt("n=512 p0=0.15, committee mean %.1f/%.1f/%.1f; loop messages mean %.3g/%.3g/%.3g for f=1/4/16, "
                   "growth %.2fx and %.2fx (limit %.1fx); (announce+NEW)/(n committee) mean %.3f/%.3f/%.3f "
                   "(limit %.1fx), worst single trial %.3fx",
                   committee[0], committee[1], committee[2], loop[0], loop[1], loop[2], g1, g2, kLoopGrowthPer4xF,
                   ann_ratio[0], ann_ratio[1], ann_ratio[2], kAnnounceSpread, worst_trial);
  return res;
}

// Replays trials from their (config, seed) pair: every failing one, plus the first trial of each cell.
std::string replay_check(const SweepSpec& spec, const SweepResult& grid, std::uint64_t& replayed, std::uint64_t& bad) {
  std::string first;
  for (const auto& r : grid.rows) {
    if (r.transcript.success && r.trial != 0) continue;
    const auto cfg = trial_config(spec, grid.cells[r.cell], r.trial);
    auto a = run_trial(TrialConfig::from_json(cfg.to_json()));
    auto b = run_trial(cfg);
    ++replayed;
    TrialRow again{r.cell, r.trial, r.adversary, a};
    if (a.to_json().dump() != b.to_json().dump() || again.csv_row() != r.csv_row()) {
      ++bad;
      if (first.empty()) first = cfg.to_json().dump();
    }
  }
  return first;
}

Result criterion10() {
  Result res;
  std::string parts;
  std::uint64_t replayed = 0, replay_bad = 0;
  for (const auto& [label, spec, cached, file] :
       {std::tuple{"crash", crash_grid_spec(), &crash_grid, "crash_grid_raw.csv"},
        std::tuple{"byzantine", byz_grid_spec(), &byz_grid, "byz_grid_raw.csv"}}) {
    // Reference: the grid run of criteria 1 or 5 when it left its CSV behind, else a first run here.
    auto reference = load(file);
    const Grid* ref_grid = nullptr;
    if (!reference) {
      ref_grid = &cached();
      reference = ref_grid->result.raw_csv();
    }
    const auto rerun = run_grid(spec);
    const auto csv = rerun.result.raw_csv();
    const bool same = csv == *reference;
    res.pass = res.pass && same;
    const auto first = replay_check(spec, rerun.result, replayed, replay_bad);
    parts += fmt("%s%s grid digest %s vs %s (%s, %zu rows)", parts.empty() ? "" : "; ", label,
                 digest(*reference).c_str(), digest(csv).c_str(), same ? "identical" : "DIFFERENT",
                 rerun.result.rows.size());
    if (!first.empty()) parts += "; replay mismatch " + first;
  }
  res.pass = res.pass && replay_bad == 0;
  res.detail = parts + fmt("; %llu trials replayed, %llu mismatched", (unsigned long long)replayed,
                           (unsigned long long)replay_bad);
  return res;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> which;
  std::string artifacts = g_artifacts.string();
  app.add_option("--criterion", which, "Criteria to run (default: all)")->delimiter(',')->check(CLI::Range(1, 10));
  app.add_option("--artifacts", artifacts, "Directory for grid CSVs shared between runs");
  CLI11_PARSE(app, argc, argv);
  g_artifacts = artifacts;
  if (which.empty())
    for (int k = 1; k <= 10; ++k) which.push_back(k);

  const std::map<int, std::function<Result()>> criteria{
      {1, criterion1}, {2, criterion2}, {3, criterion3}, {4, criterion4},  {5, criterion5},
      {6, criterion6}, {7, criterion7}, {8, criterion8}, {9, criterion9}, {10, criterion10}};
  int failed = 0;
  for (int k : which) {
    Result r;
    try {
      r = criteria.at(k)();
    } catch (const std::exception& e) {
      r = {false, std::string("exception: ") + e.what()};
    }
    failed += r.pass ? 0 : 1;
    std::printf("criterion %d %s: %s\n", k, r.pass ? "PASS" : "FAIL", r.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
