#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rsim/byz.hpp"
#include "rsim/byz_protocol.hpp"

namespace rsim::byz {

struct ValidatorContractReport {
  std::uint64_t runs = 0;
  std::uint64_t unanimous_runs = 0;
  std::uint64_t same_runs = 0;             ///< runs where some correct member output same = 1
  std::uint64_t validity_out = 0;          ///< out is not any correct member's input
  std::uint64_t validity_unanimous = 0;    ///< unanimous input x but some output differs from (1, x)
  std::uint64_t weak_agreement = 0;        ///< same = 1 somewhere but outputs differ
  std::string witness;

  std::uint64_t violations() const { return validity_out + validity_unanimous + weak_agreement; }
};

/// One Byzantine message in a validator round: sender index (>= correct), receiver, value.
struct ValidatorVote {
  NodeIndex sender;
  NodeIndex receiver;
  Fingerprint value;
};

/// Two-round validator among correct members 0..g-1 (all-to-all, self included) with the given
/// Byzantine deliveries per round; returns each correct member's result.
std::vector<ValidatorResult> run_validator(double c_g, const std::vector<Fingerprint>& inputs,
                                           const std::vector<ValidatorVote>& init_votes,
                                           const std::vector<ValidatorVote>& echo_votes);

/// Property check of the validator with `correct` + `byzantine` members under the thresholds of
/// `params`: `equivocator_runs` executions driven by the validator_equivocator strategy and
/// `random_runs` random adversarial message patterns.
ValidatorContractReport check_validator_contract(const ByzParams& params, std::uint32_t correct, std::uint32_t byzantine,
                                                 std::uint64_t equivocator_runs, std::uint64_t random_runs,
                                                 std::uint64_t seed);

struct ConsensusContractReport {
  std::uint64_t input_patterns = 0;
  std::uint64_t states_explored = 0;   ///< distinct global states summed over rounds and patterns
  std::uint64_t final_states = 0;
  std::uint64_t agreement = 0;
  std::uint64_t validity = 0;
  std::string witness;

  std::uint64_t violations() const { return agreement + validity; }
};

/// Exhaustive check of binary consensus among `correct` members and `byzantine` members under
/// the thresholds of `params`. Every round, each Byzantine member independently chooses for each
/// correct receiver whether to send INIT for either label, ECHO for either of its own slots, and
/// ECHO for every correct slot. States are memoized per round.
ConsensusContractReport check_consensus_contract(const ByzParams& params, std::uint32_t correct,
                                                 std::uint32_t byzantine);

}  // namespace rsim::byz
