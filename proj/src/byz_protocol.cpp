#include "rsim/byz_protocol.hpp"

#include <algorithm>

namespace rsim::byz {

namespace {

// Most frequent value; ties go to the smaller value (map order).
std::pair<const Fingerprint*, std::uint32_t> top_value(const std::map<Fingerprint, std::uint32_t>& c) {
  const Fingerprint* best = nullptr;
  std::uint32_t n = 0;
  for (const auto& [v, k] : c) {
    if (k > n) {
      best = &v;
      n = k;
    }
  }
  return {best, n};
}

}  // namespace

std::optional<Fingerprint> validator_echo(const std::map<Fingerprint, std::uint32_t>& init_counts, double c_g) {
  auto [v, k] = top_value(init_counts);
  if (v && k >= c_g) return *v;
  return std::nullopt;
}

ValidatorResult validator_decide(const Fingerprint& in, const std::map<Fingerprint, std::uint32_t>& echo_counts,
                                 double c_g) {
  ValidatorResult r{false, in};
  auto [v1, k1] = top_value(echo_counts);
  if (!v1) return r;
  std::uint32_t k2 = 0;
  for (const auto& [v, k] : echo_counts)
    if (&v != v1) k2 = std::max(k2, k);
  if (k1 > c_g / 2.0) r.out = *v1;
  if (static_cast<double>(k1 - k2) > c_g / 2.0 && k1 >= c_g) r.same = true;
  return r;
}

ConsensusConfig ConsensusConfig::from(const ByzParams& p) {
  ConsensusConfig c;
  c.n = static_cast<std::uint32_t>(p.n);
  c.c_g = p.c_g;
  c.faults = p.consensus_faults();
  c.phases = p.consensus_phases();
  return c;
}

ConsensusShared::ConsensusShared(const ConsensusConfig& cfg)
    : words_((cfg.n + 63) / 64),
      bits_(std::size_t{2} * cfg.n * words_, 0),
      count_(2 * cfg.n, 0),
      init_flag_(2 * cfg.n, 0),
      touched_flag_(2 * cfg.n, 0) {}

void ConsensusShared::begin_round() {
  for (auto s : touched_) {
    init_flag_[s] = 0;
    touched_flag_[s] = 0;
  }
  touched_.clear();
}

void ConsensusShared::touch(std::uint32_t slot) {
  if (!touched_flag_[slot]) {
    touched_flag_[slot] = 1;
    touched_.push_back(slot);
  }
}

void ConsensusShared::add(NodeIndex sender, const ByzMessage& m) {
  if (m.kind != MessageType::consensus_msg) return;
  if (m.ckind == ConsensusKind::init) {
    const auto slot = slot_of(sender, m.label);
    init_flag_[slot] = 1;
    touch(slot);
    return;
  }
  if (!m.slots) return;
  for (auto slot : *m.slots) {
    if (slot >= count_.size()) continue;
    auto& w = bits_[slot * words_ + (sender >> 6)];
    const std::uint64_t bit = 1ULL << (sender & 63);
    if (w & bit) continue;
    w |= bit;
    ++count_[slot];
    touch(slot);
  }
}

std::string ConsensusShared::state_key() const {
  std::string k;
  k.reserve(bits_.size() * 8);
  for (auto w : bits_) k.append(reinterpret_cast<const char*>(&w), sizeof w);
  return k;
}

ConsensusNode::ConsensusNode(const ConsensusConfig& cfg, bool input)
    : cfg_(&cfg), input_(input), echoed_(2 * cfg.n, 0), accepted_(2 * cfg.n, 0), head_(2 * cfg.n, -1) {}

ConsensusNode::Sends ConsensusNode::sends(std::uint64_t r) {
  Sends s;
  if (r % 2 == 1) {
    const std::uint64_t phase = (r + 1) / 2;
    if (phase == 1 && input_) s.init = ConsensusLabel::input;
    if (phase > 1 && support_due_) {
      s.init = ConsensusLabel::support;
      support_due_ = false;
    }
  }
  s.echoes.swap(pending_);
  return s;
}

std::uint32_t ConsensusNode::count(std::uint32_t slot, const ConsensusShared& shared) const {
  std::uint32_t c = shared.count(slot);
  for (auto e = head_[slot]; e >= 0; e = extra_[static_cast<std::size_t>(e)].next)
    if (!shared.has(slot, extra_[static_cast<std::size_t>(e)].sender)) ++c;
  return c;
}

void ConsensusNode::evaluate(std::uint32_t slot, bool init, const ConsensusShared& shared) {
  if (echoed_[slot] && accepted_[slot]) return;
  const std::uint32_t c = count(slot, shared);
  if (!echoed_[slot] && (init || 2.0 * c > cfg_->c_g)) {
    echoed_[slot] = 1;
    pending_.push_back(slot);
  }
  if (!accepted_[slot] && c >= cfg_->c_g) {
    accepted_[slot] = 1;
    if (slot_label(slot) == ConsensusLabel::input) ++accepted_input_;
    else ++accepted_support_;
  }
}

std::string ConsensusNode::state_key() const {
  std::string k;
  k.push_back(static_cast<char>(input_ | (accepted_one_ << 1) | (support_due_ << 2)));
  k.append(echoed_.begin(), echoed_.end());
  k.append(accepted_.begin(), accepted_.end());
  std::vector<std::uint32_t> pend(pending_);
  std::sort(pend.begin(), pend.end());
  for (auto slot : pend) k.append(reinterpret_cast<const char*>(&slot), sizeof slot);
  k.push_back('|');
  for (std::uint32_t slot = 0; slot < head_.size(); ++slot) {
    std::vector<NodeIndex> senders;
    for (auto e = head_[slot]; e >= 0; e = extra_[static_cast<std::size_t>(e)].next)
      senders.push_back(extra_[static_cast<std::size_t>(e)].sender);
    if (senders.empty()) continue;
    std::sort(senders.begin(), senders.end());
    k.append(reinterpret_cast<const char*>(&slot), sizeof slot);
    for (auto s : senders) k.append(reinterpret_cast<const char*>(&s), sizeof s);
    k.push_back(';');
  }
  return k;
}

void ConsensusNode::receive(std::uint64_t r, const ConsensusShared& shared, std::span<const Mail> own) {
  own_slots_.clear();
  own_inits_.clear();
  for (const auto& m : own) {
    if (m.msg->kind != MessageType::consensus_msg) continue;
    if (m.msg->ckind == ConsensusKind::init) {
      own_inits_.push_back(slot_of(m.sender, m.msg->label));
      continue;
    }
    if (!m.msg->slots) continue;
    for (auto slot : *m.msg->slots) {
      if (slot >= echoed_.size() || shared.has(slot, m.sender)) continue;
      const std::size_t words = (cfg_->n + 63) / 64;
      if (seen_.empty()) seen_.assign(echoed_.size() * words, 0);
      auto& w = seen_[slot * words + (m.sender >> 6)];
      const std::uint64_t bit = 1ULL << (m.sender & 63);
      if (w & bit) continue;
      w |= bit;
      extra_.push_back({m.sender, head_[slot]});
      head_[slot] = static_cast<std::int32_t>(extra_.size() - 1);
      own_slots_.push_back(slot);
    }
  }
  for (auto slot : shared.touched()) evaluate(slot, shared.init_now(slot), shared);
  for (auto slot : own_inits_) evaluate(slot, true, shared);
  for (auto slot : own_slots_) evaluate(slot, false, shared);

  if (r % 2 == 0) {
    const std::uint64_t phase = r / 2;
    if (!accepted_one_ && accepted_input_ >= cfg_->faults + 1 && accepted_support_ + 1 >= phase) {
      accepted_one_ = true;
      support_due_ = phase < cfg_->phases;
    }
  }
}

}  // namespace rsim::byz
