#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rsim/byz.hpp"
#include "rsim/random.hpp"

namespace rsim::byz {

enum class Step : std::uint8_t { elect, announce, val_init, val_echo, consensus, diff, new_id };

/// Position of the current round in the lockstep schedule (public knowledge).
struct StepInfo {
  Step step = Step::elect;
  std::uint64_t round = 0;
  std::uint64_t iteration = 0;
  Segment segment{};
  std::uint64_t cons_round = 0;   ///< 1-based round inside a consensus instance
  std::uint64_t cons_rounds = 0;
};

/// What a static Byzantine coalition may see and do during one round: its members' own
/// inboxes, shared randomness, and sends under its members' own identities.
class ByzContext {
 public:
  virtual ~ByzContext() = default;

  virtual const StepInfo& step() const = 0;
  virtual const ByzParams& params() const = 0;
  virtual std::span<const NodeIndex> coalition() const = 0;
  virtual std::span<const NodeIndex> everyone() const = 0;
  virtual NodeId id(NodeIndex v) const = 0;
  /// Shared lottery bit of v's identifier.
  virtual bool elected(NodeIndex v) const = 0;
  /// Committee members outside the coalition, as announced to the coalition by ELECT.
  virtual std::span<const NodeIndex> correct_members() const = 0;
  virtual std::span<const NodeIndex> view(NodeIndex b) const = 0;
  /// b's deliveries of the previous round; empty after consensus rounds.
  virtual std::span<const std::pair<NodeIndex, ByzMessage>> inbox(NodeIndex b) const = 0;
  /// Identity list of coalition member b built from the announcements it received.
  virtual const IdentityList& list(NodeIndex b) const = 0;
  /// Fingerprint of `L` on the current segment under the current iteration's hash.
  virtual Fingerprint fingerprint(const IdentityList& L) const = 0;

  virtual void send(NodeIndex b, std::span<const NodeIndex> to, ByzMessage m) = 0;
  /// to[k] receives m[k]; payloads must share type and size.
  virtual void send_each(NodeIndex b, std::span<const NodeIndex> to, std::span<const ByzMessage> m) = 0;
};

/// Static Byzantine strategy. The default `act` behaves honestly outside consensus (where it
/// stays silent) and never sends NEW.
class ByzAdversary {
 public:
  explicit ByzAdversary(std::uint64_t seed) : rng_(seed, 0x62797a616476ULL) {}
  virtual ~ByzAdversary() = default;

  virtual std::string name() const = 0;
  virtual void act(ByzContext& ctx);

 protected:
  void honest_elect(ByzContext& ctx);
  void honest_announce(ByzContext& ctx);
  void honest_val_init(ByzContext& ctx);
  void honest_val_echo(ByzContext& ctx);
  void honest_diff(ByzContext& ctx);
  /// Each element of `from` kept with probability 1/2.
  std::vector<NodeIndex> half(std::span<const NodeIndex> from);
  /// Splits correct members into two halves with a coalition-wide coin, fixed per trial.
  const std::vector<NodeIndex>& split_a(ByzContext& ctx);
  const std::vector<NodeIndex>& split_b(ByzContext& ctx);
  /// Announces every coalition id to the whole coalition and to split_a only.
  void poison_announce(ByzContext& ctx);

  PrivateStream rng_;

 private:
  void make_split(ByzContext& ctx);
  std::vector<NodeIndex> a_, b_;
  bool split_ready_ = false;
};

using ByzAdversaryFactory = std::function<std::unique_ptr<ByzAdversary>(std::uint64_t seed, const nlohmann::json& params)>;

/// Built-ins: silent, selective_announcer, list_poisoner, validator_equivocator, consensus_saboteur.
std::unique_ptr<ByzAdversary> make_byz_adversary(const std::string& name, std::uint64_t seed,
                                                 const nlohmann::json& params = nlohmann::json::object());
void register_byz_adversary(const std::string& name, ByzAdversaryFactory factory);
std::vector<std::string> byz_adversary_names();

}  // namespace rsim::byz
