#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rsim/trial.hpp"

namespace rsim {

/// A budget entry: an absolute count or an expression in n ("n/8", "n-1", "0.25n", "f_bound").
struct FValue {
  std::string text;
  std::uint64_t resolve(std::uint64_t n, const std::string& protocol, double epsilon0) const;
};

/// Namespace size as a function of n: "4n", "5n^2" or an absolute value.
struct NValue {
  std::uint64_t factor = 4;
  unsigned power = 1;
  std::optional<std::uint64_t> absolute;
  std::uint64_t resolve(std::uint64_t n) const;
};

struct SweepSpec {
  std::string protocol = "crash";
  std::vector<std::uint64_t> n_values;
  std::vector<FValue> f_values;
  std::vector<std::string> adversaries;
  std::uint64_t trials_per_cell = 1;
  std::uint64_t base_seed = 0;
  NValue N;
  double epsilon0 = 0.05;
  Overrides overrides;
  bool early_exit = false;
  CountPolicy count_policy = CountPolicy::sent;
  std::string raw_csv = "raw.csv";
  std::string summary_csv = "summary.csv";

  /// Throws ConfigError on unknown fields' values, trials_per_cell < 1 or out-of-tolerance budgets.
  static SweepSpec from_json(const nlohmann::json& j);
  void validate() const;
};

struct Cell {
  std::uint64_t n = 0;
  std::uint64_t f = 0;
  std::string adversary;
};

struct Stat {
  double mean = 0;
  double p99 = 0;
  double max = 0;
};

struct CellSummary {
  Cell cell;
  std::uint64_t trials = 0;
  double f_actual_mean = 0;
  Stat rounds, messages, bits;
  double success_rate = 0;
  std::uint64_t monitor_failure_count = 0;
  std::uint64_t unexplained_failures = 0;  ///< failed trials without a budgeted cause

  static std::string csv_header();
  std::string csv_row() const;
};

/// Trial outcome as stored in the raw CSV.
struct TrialRow {
  std::size_t cell = 0;
  std::uint64_t trial = 0;
  std::string adversary;
  Transcript transcript;  ///< events and outcome dropped to bound memory

  static std::string csv_header();
  std::string csv_row() const;
};

struct SweepResult {
  std::vector<Cell> cells;
  std::vector<TrialRow> rows;  ///< ordered by (cell, trial) regardless of parallelism
  std::vector<CellSummary> summaries;
  std::uint64_t deterministic_failures = 0;

  std::string raw_csv() const;
  std::string summary_csv() const;
  /// 0 when no deterministic monitor failed, 1 otherwise.
  int exit_code() const { return deterministic_failures == 0 ? 0 : 1; }
};

/// True when a trial violated a claim that must hold in every execution. Byzantine trials that
/// hit a committee-tail or hash-collision event only fail their probabilistic budget.
bool deterministic_failure(const Transcript& t);

std::vector<Cell> expand_cells(const SweepSpec& spec);
TrialConfig trial_config(const SweepSpec& spec, const Cell& cell, std::uint64_t trial);

/// Runs every (cell, trial) with seed base_seed + trial on `jobs` worker threads.
SweepResult run_sweep(const SweepSpec& spec, unsigned jobs = 1,
                      const std::function<void(const TrialRow&)>& on_row = {});

/// Writes raw and summary CSVs into `dir`; throws IoError when a file cannot be written.
void write_sweep(const SweepResult& result, const SweepSpec& spec, const std::string& dir);

struct FitReport {
  std::string model;
  double coefficient = 0;
  double max_relative_residual = 0;
  std::size_t points = 0;
  /// Per-point messages / model(x), in input order.
  std::vector<double> ratios;
};

/// Model names: "n_log2n" (n log^2 n), "f_logn_nlogn" ((f + log n) n log n),
/// "byz" (f log N log^3 n + n log n). Logs are base 2.
double model_value(const std::string& model, double n, double f, double N);
std::vector<std::string> model_names();

struct FitPoint {
  double n = 0, f = 0, N = 0, messages = 0;
};

/// Least squares of messages = c * model through the origin. Throws InsufficientData with
/// fewer than 4 distinct n (or f) values, ConfigError for an unknown model.
FitReport fit_scaling(const std::vector<FitPoint>& points, const std::string& model);
/// Reads the n, f_actual, N and messages columns of a raw CSV.
std::vector<FitPoint> read_fit_points(const std::string& path);

}  // namespace rsim
