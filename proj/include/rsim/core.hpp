#pragma once

#include <bit>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace rsim {

/// Original identity of a node, drawn from the namespace [1, N].
struct NodeId {
  std::uint64_t value = 0;

  friend constexpr auto operator<=>(NodeId, NodeId) = default;
};

/// Position of a node inside a simulation (0-based, dense). Unrelated to its identity.
using NodeIndex = std::uint32_t;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EncodeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DegenerateInterval : std::logic_error {
  using std::logic_error::logic_error;
};

struct NotMember : std::logic_error {
  using std::logic_error::logic_error;
};

struct MonitorViolation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct BudgetExceeded : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InsufficientData : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// ceil(log2(x)) for x >= 1; 0 for x <= 1.
constexpr unsigned ceil_log2(std::uint64_t x) {
  return x <= 1 ? 0u : static_cast<unsigned>(std::bit_width(x - 1));
}

/// Number of bits needed to write x in binary (at least 1).
constexpr unsigned bit_length(std::uint64_t x) {
  return x == 0 ? 1u : static_cast<unsigned>(std::bit_width(x));
}

constexpr double clamp_probability(double p) { return p > 1.0 ? 1.0 : (p < 0.0 ? 0.0 : p); }

}  // namespace rsim
