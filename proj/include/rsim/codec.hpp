#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "rsim/core.hpp"

namespace rsim {

/// 4-bit tag that prefixes every canonical encoding.
enum class MessageType : std::uint8_t {
  elect_notify = 1,
  status_report = 2,
  committee_response = 3,
  elect = 4,
  id_announce = 5,
  val_init = 6,
  val_echo = 7,
  diff_report = 8,
  consensus_msg = 9,
  new_id = 10,
};

constexpr unsigned kTagBits = 4;

std::string_view to_string(MessageType t);

/// Per-type constant c in the bound bits <= c * ceil(log2 N).
unsigned bit_budget_factor(MessageType t);

/// Field widths of the canonical encoding for a given (n, N).
struct Widths {
  std::uint64_t n = 0;
  std::uint64_t N = 0;
  unsigned id = 1;      ///< ids in [1, N], written as id - 1
  unsigned pos = 1;     ///< interval endpoints in [1, n], written as value - 1
  unsigned level = 1;   ///< depth and probability exponent
  unsigned hash = 8;    ///< segment fingerprints
  unsigned count = 1;   ///< number of ones in a segment, in [0, N]

  static Widths make(std::uint64_t n, std::uint64_t N);

  /// ceil(log2 N), at least 1; the unit of the per-message bit budget.
  unsigned log_N() const { return id; }
  std::uint64_t bit_budget(MessageType t) const { return std::uint64_t{bit_budget_factor(t)} * log_N(); }
};

using BitString = std::vector<bool>;

class BitWriter {
 public:
  /// Appends the low `width` bits of `value`, most significant first.
  void put(std::uint64_t value, unsigned width);
  void put_tag(MessageType t) { put(static_cast<std::uint64_t>(t), kTagBits); }
  void put_id(NodeId id, const Widths& w);
  void put_pos(std::uint64_t v, const Widths& w);

  const BitString& bits() const { return bits_; }
  BitString take() { return std::move(bits_); }

 private:
  BitString bits_;
};

class BitReader {
 public:
  explicit BitReader(const BitString& bits) : bits_(bits) {}

  std::uint64_t get(unsigned width);
  MessageType get_tag();
  NodeId get_id(const Widths& w) { return NodeId{get(w.id) + 1}; }
  std::uint64_t get_pos(const Widths& w) { return get(w.pos) + 1; }
  bool exhausted() const { return at_ == bits_.size(); }

 private:
  const BitString& bits_;
  std::size_t at_ = 0;
};

}  // namespace rsim
