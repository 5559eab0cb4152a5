#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "rsim/harness.hpp"
#include "rsim/oracle.hpp"

using namespace rsim;

namespace {

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

int cmd_run(const std::string& config, const std::string& out_dir, unsigned jobs, const std::string& log) {
  const auto spec = SweepSpec::from_json(read_json(config));
  const auto level = parse_log_level(log);
  std::function<void(const TrialRow&)> progress;
  if (level != LogLevel::off) {
    progress = [&](const TrialRow& r) {
      const auto& t = r.transcript;
      std::fprintf(stderr, "cell %zu trial %llu n=%llu f=%llu %s rounds=%llu messages=%llu %s\n", r.cell,
                   static_cast<unsigned long long>(r.trial), static_cast<unsigned long long>(t.n),
                   static_cast<unsigned long long>(t.f_budget), r.adversary.c_str(),
                   static_cast<unsigned long long>(t.metrics.rounds_total),
                   static_cast<unsigned long long>(t.metrics.messages_total), t.success ? "ok" : t.failure_cause.c_str());
    };
  }
  const auto res = run_sweep(spec, jobs, progress);
  write_sweep(res, spec, out_dir);
  for (const auto& s : res.summaries) {
    std::printf("n=%llu f=%llu %-22s success=%.3f messages_mean=%.0f monitor_failures=%llu\n",
                static_cast<unsigned long long>(s.cell.n), static_cast<unsigned long long>(s.cell.f),
                s.cell.adversary.c_str(), s.success_rate, s.messages.mean,
                static_cast<unsigned long long>(s.monitor_failure_count));
  }
  return res.exit_code();
}

int cmd_fit(const std::string& raw, const std::string& model) {
  const auto rep = fit_scaling(read_fit_points(raw), model);
  std::printf("model=%s points=%zu coefficient=%.6g max_relative_residual=%.6g\n", rep.model.c_str(), rep.points,
              rep.coefficient, rep.max_relative_residual);
  return 0;
}

int cmd_oracle(std::uint64_t n, bool mutate) {
  OracleOptions opt;
  if (mutate) opt.mutation = crash::Mutation::rank_off_by_one;
  const auto rep = exhaustive_crash_oracle(n, opt);
  std::printf("n=%llu states=%llu executions=%llu violations=%llu\n", static_cast<unsigned long long>(n),
              static_cast<unsigned long long>(rep.states), static_cast<unsigned long long>(rep.executions),
              static_cast<unsigned long long>(rep.violations));
  if (!rep.witness.empty()) std::printf("first violation: %s\n", rep.witness.c_str());
  return rep.holds ? 0 : 1;
}

int cmd_replay(const std::string& trial) {
  auto cfg = TrialConfig::from_json(read_json(trial));
  const auto t = run_trial(cfg);
  std::cout << t.to_json().dump(2) << '\n';
  return deterministic_failure(t) ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Seeded simulator for crash- and Byzantine-resilient renaming"};
  app.require_subcommand(1);

  std::string config, out_dir, log = "off";
  unsigned jobs = 1;
  auto* run = app.add_subcommand("run", "Run a sweep and write raw and summary CSVs");
  run->add_option("--config", config, "Sweep spec (JSON)")->required();
  run->add_option("--out-dir", out_dir, "Output directory")->required();
  run->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
  run->add_option("--log", log, "off, summary or trace")->check(CLI::IsMember({"off", "summary", "trace"}));

  std::string raw, model;
  auto* fit = app.add_subcommand("fit", "Fit messages against a scaling model");
  fit->add_option("--raw", raw, "Raw CSV from `run`")->required();
  fit->add_option("--model", model, "n_log2n, f_logn_nlogn or byz")->required();

  std::uint64_t n = 4;
  bool mutate = false;
  auto* oracle = app.add_subcommand("oracle", "Exhaustively check every crash schedule at small n");
  oracle->add_option("--n", n, "Number of nodes (2..6)")->required();
  oracle->add_flag("--mutate", mutate, "Use the rank off-by-one fault");

  std::string trial;
  auto* replay = app.add_subcommand("replay", "Re-run one trial config and print its transcript JSON");
  replay->add_option("--trial", trial, "Trial config (JSON), e.g. a line of failures.jsonl")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }
  try {
    if (*run) return cmd_run(config, out_dir, jobs, log);
    if (*fit) return cmd_fit(raw, model);
    if (*oracle) return cmd_oracle(n, mutate);
    if (*replay) return cmd_replay(trial);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const InsufficientData& e) {
    std::fprintf(stderr, "insufficient data: %s\n", e.what());
    return 2;
  } catch (const IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
