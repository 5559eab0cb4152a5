#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "rsim/transcript.hpp"

namespace rsim {

struct AdversarySpec {
  std::string name = "none";
  std::uint64_t budget_f = 0;
  nlohmann::json params = nlohmann::json::object();
};

struct Overrides {
  std::optional<double> p0;  ///< election / lottery probability replacing the formula
  bool clamp = true;
};

/// One trial: {protocol, n, N, epsilon0, seed, adversary: {name, budget_f, params}, overrides: {p0, clamp}}.
struct TrialConfig {
  std::string protocol = "crash";  ///< "crash" or "byzantine"
  std::uint64_t n = 0;
  std::uint64_t N = 0;
  double epsilon0 = 0.05;
  std::uint64_t seed = 0;
  AdversarySpec adversary;
  Overrides overrides;
  bool early_exit = false;
  CountPolicy count_policy = CountPolicy::sent;
  LogLevel log = LogLevel::off;

  /// Rejects unknown protocols, n < 4, N < n and budgets beyond the protocol's tolerance.
  void validate() const;
  static TrialConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// Largest Byzantine budget tolerated for (n, epsilon): ceil((1/3 - eps) n) - 1.
std::uint64_t byzantine_tolerance(std::uint64_t n, double epsilon);

Transcript run_crash_trial(const TrialConfig& cfg);
Transcript run_byzantine_trial(const TrialConfig& cfg);
Transcript run_trial(const TrialConfig& cfg);

}  // namespace rsim
