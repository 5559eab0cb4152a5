#include <cmath>

#include "doctest.h"

#include "rsim/harness.hpp"

using namespace rsim;

static SweepSpec small_crash_sweep() {
  return SweepSpec::from_json({{"protocol", "crash"},
                               {"n_values", {8, 16}},
                               {"f_values", {0, "n/8", "n-1"}},
                               {"adversaries", {"uniform_random", "committee_assassin"}},
                               {"trials_per_cell", 4},
                               {"base_seed", 50}});
}

TEST_CASE("sweep spec parsing") {
  const auto s = small_crash_sweep();
  CHECK(s.N.resolve(16) == 64);
  const auto cells = expand_cells(s);
  REQUIRE(cells.size() == 12);
  CHECK(cells[2].f == 1);
  CHECK(cells[4].f == 7);
  CHECK(cells[10].f == 15);
  CHECK(trial_config(s, cells[0], 3).seed == 53);

  CHECK(FValue{"0.25n"}.resolve(64, "crash", 0.05) == 16);
  CHECK(FValue{"n/10"}.resolve(128, "byzantine", 0.05) == 12);
  CHECK(FValue{"f_bound"}.resolve(32, "byzantine", 0.05) == 9);
  CHECK(FValue{"f_bound"}.resolve(32, "crash", 0.05) == 31);
  CHECK_THROWS_AS(FValue{"lots"}.resolve(8, "crash", 0.05), ConfigError);

  nlohmann::json j{{"protocol", "crash"}, {"n_values", {8}}, {"f_values", {0}}, {"adversaries", {"none"}},
                   {"trials_per_cell", 0}};
  CHECK_THROWS_AS(SweepSpec::from_json(j), ConfigError);
  j["trials_per_cell"] = 1;
  j["f_values"] = {8};
  CHECK_THROWS_AS(SweepSpec::from_json(j), ConfigError);
  j = {{"protocol", "byzantine"}, {"n_values", {32}}, {"f_values", {10}}, {"adversaries", {"silent"}},
       {"trials_per_cell", 1}};
  CHECK_THROWS_AS(SweepSpec::from_json(j), ConfigError);
  j["f_values"] = {"f_bound"};
  const auto b = SweepSpec::from_json(j);
  CHECK(b.N.resolve(32) == 5120);
}

TEST_CASE("sweeps are reproducible and parallel runs merge in order") {
  const auto s = small_crash_sweep();
  const auto serial = run_sweep(s, 1);
  CHECK(serial.rows.size() == 48);
  CHECK(serial.exit_code() == 0);
  CHECK(run_sweep(s, 1).raw_csv() == serial.raw_csv());
  const auto parallel = run_sweep(s, 3);
  CHECK(parallel.raw_csv() == serial.raw_csv());
  CHECK(parallel.summary_csv() == serial.summary_csv());
  for (const auto& c : serial.summaries) {
    CHECK(c.success_rate == 1.0);
    CHECK(c.messages.max >= c.messages.p99);
    CHECK(c.rounds.max >= c.rounds.mean);
  }
  CHECK_THROWS_AS(write_sweep(serial, s, "/proc/no-such-dir/out"), IoError);
}

TEST_CASE("byzantine f sweep respects the iteration bound") {
  const auto s = SweepSpec::from_json({{"protocol", "byzantine"},
                                       {"n_values", {32}},
                                       {"f_values", {0, 1, 3, "f_bound"}},
                                       {"adversaries", {"list_poisoner"}},
                                       {"trials_per_cell", 2}});
  const auto res = run_sweep(s, 1);
  CHECK(res.exit_code() == 0);
  for (const auto& r : res.rows) {
    const double f = std::max<double>(1.0, static_cast<double>(r.transcript.f_actual));
    CHECK(r.transcript.extra.at("iterations") <= 4 * f * std::log2(5120.0));
  }
}

TEST_CASE("scaling fits") {
  std::vector<FitPoint> exact;
  for (double n : {64, 128, 256, 512, 1024}) exact.push_back({n, 0, 4 * n, 3 * n * std::log2(n) * std::log2(n)});
  const auto r = fit_scaling(exact, "n_log2n");
  CHECK(r.coefficient == doctest::Approx(3.0));
  CHECK(r.max_relative_residual < 1e-12);

  std::vector<FitPoint> flat;
  for (double n : {64, 128, 256, 512, 1024}) flat.push_back({n, 0, 4 * n, 1000});
  CHECK(fit_scaling(flat, "n_log2n").max_relative_residual > 0.9);

  std::vector<FitPoint> few(exact.begin(), exact.begin() + 3);
  CHECK_THROWS_AS(fit_scaling(few, "n_log2n"), InsufficientData);
  CHECK_THROWS_AS(fit_scaling(exact, "quadratic"), ConfigError);

  std::vector<FitPoint> fs;
  for (double f : {1, 2, 4, 8}) fs.push_back({256, f, 1024, 7 * model_value("f_logn_nlogn", 256, f, 1024)});
  CHECK(fit_scaling(fs, "f_logn_nlogn").coefficient == doctest::Approx(7.0));
}
