#include "rsim/codec.hpp"

#include <algorithm>
#include <string>

namespace rsim {

std::string_view to_string(MessageType t) {
  switch (t) {
    case MessageType::elect_notify: return "ELECT_NOTIFY";
    case MessageType::status_report: return "STATUS_REPORT";
    case MessageType::committee_response: return "COMMITTEE_RESPONSE";
    case MessageType::elect: return "ELECT";
    case MessageType::id_announce: return "ID_ANNOUNCE";
    case MessageType::val_init: return "VAL_INIT";
    case MessageType::val_echo: return "VAL_ECHO";
    case MessageType::diff_report: return "DIFF_REPORT";
    case MessageType::consensus_msg: return "CONSENSUS_MSG";
    case MessageType::new_id: return "NEW";
  }
  return "UNKNOWN";
}

unsigned bit_budget_factor(MessageType t) {
  switch (t) {
    case MessageType::elect_notify: return 4;
    case MessageType::status_report:
    case MessageType::committee_response: return 10;
    case MessageType::elect:
    case MessageType::id_announce: return 5;
    case MessageType::val_init:
    case MessageType::val_echo: return 12;
    case MessageType::diff_report: return 5;
    case MessageType::consensus_msg: return 7;
    case MessageType::new_id: return 6;
  }
  return 0;
}

Widths Widths::make(std::uint64_t n, std::uint64_t N) {
  if (n < 1 || N < n) throw ConfigError("widths need 1 <= n <= N");
  Widths w;
  w.n = n;
  w.N = N;
  w.id = std::max(1u, ceil_log2(N));
  w.pos = std::max(1u, ceil_log2(n));
  w.level = bit_length(3ULL * ceil_log2(n) + 2);
  w.hash = 8 * w.id;
  w.count = bit_length(N);
  return w;
}

void BitWriter::put(std::uint64_t value, unsigned width) {
  if (width < 64 && (value >> width) != 0) {
    throw EncodeError("value " + std::to_string(value) + " does not fit in " + std::to_string(width) + " bits");
  }
  for (unsigned i = width; i-- > 0;) bits_.push_back((value >> i) & 1U);
}

void BitWriter::put_id(NodeId id, const Widths& w) {
  if (id.value < 1 || id.value > w.N) throw EncodeError("id " + std::to_string(id.value) + " outside [1, N]");
  put(id.value - 1, w.id);
}

void BitWriter::put_pos(std::uint64_t v, const Widths& w) {
  if (v < 1 || v > w.n) throw EncodeError("position " + std::to_string(v) + " outside [1, n]");
  put(v - 1, w.pos);
}

std::uint64_t BitReader::get(unsigned width) {
  if (at_ + width > bits_.size()) throw EncodeError("truncated bit string");
  std::uint64_t v = 0;
  for (unsigned i = 0; i < width; ++i) v = (v << 1) | static_cast<std::uint64_t>(bits_[at_++]);
  return v;
}

MessageType BitReader::get_tag() {
  auto t = get(kTagBits);
  if (t < 1 || t > 10) throw EncodeError("unknown message tag " + std::to_string(t));
  return static_cast<MessageType>(t);
}

}  // namespace rsim
