#pragma once

#include <cstdint>
#include <string>

#include "rsim/crash.hpp"

namespace rsim {

struct OracleReport {
  bool holds = true;
  std::uint64_t states = 0;      ///< distinct (round, protocol state) pairs expanded
  std::uint64_t executions = 0;  ///< complete executions checked (after memoization)
  std::uint64_t violations = 0;
  std::string witness;           ///< first violation: the crash schedule and what broke
};

struct OracleOptions {
  crash::Mutation mutation = crash::Mutation::none;
  std::uint64_t state_cap = 20'000'000;
  bool stop_at_first = false;
};

/// Enumerates every crash schedule of the crash protocol on n <= 6 nodes with ids 1..n: at each
/// round, any set of nodes with pending sends may crash (up to n-1 in total), each with any
/// subset of its other live receivers still reached. Checks uniqueness, range and termination
/// on every execution. Throws BudgetExceeded past `state_cap` expanded states and ConfigError
/// when an election would need a coin flip.
OracleReport exhaustive_crash_oracle(std::uint64_t n, const OracleOptions& opt = {});

}  // namespace rsim
