#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rsim/codec.hpp"
#include "rsim/core.hpp"
#include "rsim/transcript.hpp"

namespace rsim {

/// What a protocol payload must tell the engine for accounting.
template <class P>
concept EnginePayload = requires(const P& p, const Widths& w) {
  { p.type() } -> std::convertible_to<MessageType>;
  { p.bits_each(w) } -> std::convertible_to<std::uint64_t>;
  { p.logical_count() } -> std::convertible_to<std::uint64_t>;
};

/// One delivered message: the record it came from and the payload the receiver got.
struct Delivery {
  std::uint32_t record;
  std::uint32_t payload;
};

/// Synchronous round engine over a complete network with self-links.
///
/// A round is: nodes submit sends through an Outbox bound to their own index (so the sender
/// field can never be forged), the adversary inspects `submitted()` and may crash senders with
/// a chosen delivered subset, then `deliver()` builds every receiver's inbox and the counters.
/// Envelopes are delivered in the round they were sent or never.
template <EnginePayload Payload>
class RoundEngine {
 public:
  /// All sends of one call: one payload to every receiver, or one payload per receiver.
  struct Record {
    NodeIndex sender = 0;
    std::uint32_t recv_off = 0;
    std::uint32_t recv_count = 0;
    std::uint32_t payload_off = 0;
    bool personalized = false;
    bool common = false;
    std::uint64_t bits_each = 0;
    std::uint64_t count = 1;  ///< logical messages per receiver
  };

  class Outbox {
   public:
    NodeIndex self() const { return sender_; }

    void send(NodeIndex to, Payload p) { engine_->submit(sender_, std::span<const NodeIndex>(&to, 1), std::move(p)); }
    void multicast(std::span<const NodeIndex> to, Payload p) {
      if (!to.empty()) engine_->submit(sender_, to, std::move(p));
    }
    /// to[k] receives payloads[k]; all payloads must have the same type and size.
    void personalized(std::span<const NodeIndex> to, std::span<const Payload> payloads) {
      if (!to.empty()) engine_->submit_personalized(sender_, to, payloads);
    }
    /// All n links, including the self-link.
    void broadcast(Payload p) { engine_->submit(sender_, engine_->everyone_, std::move(p)); }

   private:
    friend class RoundEngine;
    Outbox(RoundEngine* e, NodeIndex s) : engine_(e), sender_(s) {}
    RoundEngine* engine_;
    NodeIndex sender_;
  };

  /// Messages delivered to one receiver this round. For members of the audience, records that
  /// reached the whole audience are listed in `common` (shared by all of them) instead of `own`;
  /// common records are never personalized.
  struct Inbox {
    std::span<const Delivery> own;
    std::span<const Delivery> common;
  };

  RoundEngine(std::size_t n, Widths widths, CountPolicy policy = CountPolicy::sent, LogLevel log = LogLevel::off)
      : n_(n), widths_(widths), policy_(policy), log_(log), alive_(n, 1), crashed_now_(n, 0), allowed_(n),
        in_audience_(n, 0), inbox_off_(n + 1, 0) {
    everyone_.resize(n);
    for (std::size_t i = 0; i < n; ++i) everyone_[i] = static_cast<NodeIndex>(i);
  }

  std::size_t size() const { return n_; }
  const Widths& widths() const { return widths_; }
  std::uint64_t round() const { return round_; }
  bool alive(NodeIndex v) const { return alive_[v] != 0; }
  std::span<const NodeIndex> everyone() const { return everyone_; }

  /// Receivers in `members` get records covering all of them through Inbox::common. A node
  /// leaves the audience when it crashes.
  void set_audience(std::span<const NodeIndex> members) {
    std::fill(in_audience_.begin(), in_audience_.end(), 0);
    audience_size_ = 0;
    for (auto v : members) {
      if (!in_audience_[v]) ++audience_size_;
      in_audience_[v] = 1;
    }
  }

  void begin_round() {
    ++round_;
    records_.clear();
    receiver_pool_.clear();
    payloads_.clear();
    std::fill(crashed_now_.begin(), crashed_now_.end(), 0);
    note_.clear();
  }

  Outbox outbox(NodeIndex sender) { return Outbox(this, sender); }

  const std::vector<Record>& submitted() const { return records_; }
  std::span<const NodeIndex> receivers(const Record& r) const {
    return {receiver_pool_.data() + r.recv_off, r.recv_count};
  }
  /// The payload of a record (the first one, for personalized records).
  const Payload& payload(const Record& r) const { return payloads_[r.payload_off]; }
  const Payload& payload(const Delivery& d) const { return payloads_[d.payload]; }
  NodeIndex sender(const Delivery& d) const { return records_[d.record].sender; }
  const Record& record(std::uint32_t i) const { return records_[i]; }

  /// Crash `v` during the current round; only receivers in `delivered_subset` get its sends.
  void crash(NodeIndex v, std::vector<NodeIndex> delivered_subset = {}) {
    if (!alive_[v]) return;
    alive_[v] = 0;
    crashed_now_[v] = 1;
    if (in_audience_[v]) {
      in_audience_[v] = 0;
      --audience_size_;
    }
    std::sort(delivered_subset.begin(), delivered_subset.end());
    allowed_[v] = std::move(delivered_subset);
    crashed_list_.push_back(v);
  }

  void annotate(std::string s) { note_ = std::move(s); }

  void deliver() {
    std::uint64_t sent = 0, delivered = 0, bits = 0;
    RoundEvent ev;
    ev.round = round_;
    auto& count = scratch_count_;
    count.assign(n_ + 1, 0);
    common_.clear();
    for (std::uint32_t ri = 0; ri < records_.size(); ++ri) {
      auto& rec = records_[ri];
      auto* first = receiver_pool_.data() + rec.recv_off;
      auto* pay = payloads_.data() + rec.payload_off;
      const std::uint64_t per = rec.count;
      const auto t = static_cast<unsigned>(payloads_[rec.payload_off].type());
      sent += per * rec.recv_count;
      if (policy_ == CountPolicy::sent) {
        bits += per * rec.recv_count * rec.bits_each;
        metrics_.messages_by_type[t] += per * rec.recv_count;
        metrics_.bits_by_type[t] += per * rec.recv_count * rec.bits_each;
      }
      std::optional<SendTrace> tr;
      if (log_ == LogLevel::trace) {
        tr.emplace();
        tr->sender = rec.sender;
        tr->receivers.assign(first, first + rec.recv_count);
        tr->type = payloads_[rec.payload_off].type();
        tr->bits_each = rec.bits_each;
        tr->count = per;
      }
      // Filter to the receivers that actually get it.
      std::uint32_t kept = 0;
      std::uint32_t audience_hits = 0;
      const bool cut = crashed_now_[rec.sender];
      const auto& allowed = allowed_[rec.sender];
      for (std::uint32_t k = 0; k < rec.recv_count; ++k) {
        const NodeIndex to = first[k];
        if (cut && !std::binary_search(allowed.begin(), allowed.end(), to)) continue;
        if (!alive_[to]) continue;
        if (rec.personalized && kept != k) pay[kept] = std::move(pay[k]);
        first[kept++] = to;
        audience_hits += in_audience_[to];
      }
      rec.recv_count = kept;
      rec.common = !rec.personalized && audience_size_ > 0 && audience_hits == audience_size_;
      if (rec.common) {
        common_.push_back({ri, rec.payload_off});
        for (std::uint32_t k = 0; k < kept; ++k) count[first[k]] += !in_audience_[first[k]];
      } else {
        for (std::uint32_t k = 0; k < kept; ++k) ++count[first[k]];
      }
      delivered += per * kept;
      if (policy_ == CountPolicy::delivered) {
        bits += per * kept * rec.bits_each;
        metrics_.messages_by_type[t] += per * kept;
        metrics_.bits_by_type[t] += per * kept * rec.bits_each;
      }
      if (tr) {
        tr->delivered_to.assign(first, first + kept);
        ev.sends.push_back(std::move(*tr));
      }
    }
    inbox_off_.assign(n_ + 1, 0);
    for (std::size_t v = 0; v < n_; ++v) inbox_off_[v + 1] = inbox_off_[v] + count[v];
    inbox_.resize(inbox_off_[n_]);
    auto& fill = scratch_fill_;
    fill.assign(inbox_off_.begin(), inbox_off_.end() - 1);
    for (std::uint32_t ri = 0; ri < records_.size(); ++ri) {
      const auto& rec = records_[ri];
      const auto* first = receiver_pool_.data() + rec.recv_off;
      if (rec.personalized) {
        for (std::uint32_t k = 0; k < rec.recv_count; ++k) inbox_[fill[first[k]]++] = {ri, rec.payload_off + k};
      } else if (rec.common) {
        for (std::uint32_t k = 0; k < rec.recv_count; ++k) {
          if (!in_audience_[first[k]]) inbox_[fill[first[k]]++] = {ri, rec.payload_off};
        }
      } else {
        for (std::uint32_t k = 0; k < rec.recv_count; ++k) inbox_[fill[first[k]]++] = {ri, rec.payload_off};
      }
    }
    const std::uint64_t counted = policy_ == CountPolicy::sent ? sent : delivered;
    metrics_.messages_total += counted;
    metrics_.messages_delivered += delivered;
    metrics_.bits_total += bits;
    metrics_.rounds_total = round_;
    metrics_.messages_per_round.push_back(counted);
    ev.messages = counted;
    ev.bits = bits;
    ev.crashed = std::move(crashed_list_);
    ev.note = std::move(note_);
    crashed_list_.clear();
    if (log_ != LogLevel::off || !ev.crashed.empty() || !ev.note.empty()) events_.push_back(std::move(ev));
  }

  Inbox inbox(NodeIndex v) const {
    Inbox in;
    in.own = std::span<const Delivery>(inbox_.data() + inbox_off_[v], inbox_off_[v + 1] - inbox_off_[v]);
    if (in_audience_[v] && alive_[v]) in.common = common_;
    return in;
  }

  MetricCounters& metrics() { return metrics_; }
  const MetricCounters& metrics() const { return metrics_; }
  std::vector<RoundEvent>& events() { return events_; }

 private:
  std::uint64_t checked_bits(const Payload& p) {
    const std::uint64_t b = p.bits_each(widths_);
    const auto t = static_cast<unsigned>(p.type());
    if (b > metrics_.max_bits_by_type[t]) {
      if (b > widths_.bit_budget(p.type())) {
        throw EncodeError(std::string("bit budget exceeded for ") + std::string(to_string(p.type())));
      }
      metrics_.max_bits_by_type[t] = b;
    }
    return b;
  }

  void submit(NodeIndex sender, std::span<const NodeIndex> to, Payload p) {
    if (!alive_[sender]) return;
    Record r;
    r.sender = sender;
    r.recv_off = static_cast<std::uint32_t>(receiver_pool_.size());
    r.recv_count = static_cast<std::uint32_t>(to.size());
    r.payload_off = static_cast<std::uint32_t>(payloads_.size());
    r.bits_each = checked_bits(p);
    r.count = p.logical_count();
    payloads_.push_back(std::move(p));
    receiver_pool_.insert(receiver_pool_.end(), to.begin(), to.end());
    records_.push_back(r);
  }

  void submit_personalized(NodeIndex sender, std::span<const NodeIndex> to, std::span<const Payload> ps) {
    if (!alive_[sender]) return;
    if (ps.size() != to.size()) throw EncodeError("personalized send needs one payload per receiver");
    Record r;
    r.sender = sender;
    r.personalized = true;
    r.recv_off = static_cast<std::uint32_t>(receiver_pool_.size());
    r.recv_count = static_cast<std::uint32_t>(to.size());
    r.payload_off = static_cast<std::uint32_t>(payloads_.size());
    r.bits_each = checked_bits(ps[0]);
    r.count = ps[0].logical_count();
    for (const auto& p : ps) {
      if (p.type() != ps[0].type() || p.bits_each(widths_) != r.bits_each || p.logical_count() != r.count) {
        throw EncodeError("personalized payloads must share type and size");
      }
    }
    payloads_.insert(payloads_.end(), ps.begin(), ps.end());
    receiver_pool_.insert(receiver_pool_.end(), to.begin(), to.end());
    records_.push_back(r);
  }

  std::size_t n_;
  Widths widths_;
  CountPolicy policy_;
  LogLevel log_;
  std::uint64_t round_ = 0;
  std::vector<NodeIndex> everyone_;
  std::vector<std::uint8_t> alive_;
  std::vector<std::uint8_t> crashed_now_;
  std::vector<std::vector<NodeIndex>> allowed_;
  std::vector<NodeIndex> crashed_list_;
  std::vector<std::uint32_t> scratch_count_, scratch_fill_;
  std::vector<std::uint8_t> in_audience_;
  std::size_t audience_size_ = 0;
  std::vector<Record> records_;
  std::vector<NodeIndex> receiver_pool_;
  std::vector<Payload> payloads_;
  std::vector<std::uint32_t> inbox_off_;
  std::vector<Delivery> inbox_;
  std::vector<Delivery> common_;
  std::string note_;
  MetricCounters metrics_;
  std::vector<RoundEvent> events_;
};

}  // namespace rsim
