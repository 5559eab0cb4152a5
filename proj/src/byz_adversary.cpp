#include "rsim/byz_adversary.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>

#include "rsim/byz_protocol.hpp"

namespace rsim::byz {

void ByzAdversary::act(ByzContext& ctx) {
  switch (ctx.step().step) {
    case Step::elect: honest_elect(ctx); break;
    case Step::announce: honest_announce(ctx); break;
    case Step::val_init: honest_val_init(ctx); break;
    case Step::val_echo: honest_val_echo(ctx); break;
    case Step::diff: honest_diff(ctx); break;
    case Step::consensus:
    case Step::new_id: break;
  }
}

void ByzAdversary::honest_elect(ByzContext& ctx) {
  for (auto b : ctx.coalition())
    if (ctx.elected(b)) ctx.send(b, ctx.everyone(), make_elect(ctx.id(b)));
}

void ByzAdversary::honest_announce(ByzContext& ctx) {
  for (auto b : ctx.coalition()) ctx.send(b, ctx.view(b), make_id(ctx.id(b)));
}

void ByzAdversary::honest_val_init(ByzContext& ctx) {
  for (auto b : ctx.coalition())
    if (ctx.elected(b)) ctx.send(b, ctx.view(b), make_val(MessageType::val_init, ctx.fingerprint(ctx.list(b))));
}

void ByzAdversary::honest_val_echo(ByzContext& ctx) {
  for (auto b : ctx.coalition()) {
    if (!ctx.elected(b)) continue;
    std::map<NodeIndex, Fingerprint> first;
    for (const auto& [s, m] : ctx.inbox(b))
      if (m.kind == MessageType::val_init) first.try_emplace(s, m.value);
    std::map<Fingerprint, std::uint32_t> counts;
    for (const auto& [s, v] : first) ++counts[v];
    if (auto e = validator_echo(counts, ctx.params().c_g)) ctx.send(b, ctx.view(b), make_val(MessageType::val_echo, *e));
  }
}

void ByzAdversary::honest_diff(ByzContext& ctx) {
  for (auto b : ctx.coalition())
    if (ctx.elected(b)) ctx.send(b, ctx.view(b), make_diff(false));
}

std::vector<NodeIndex> ByzAdversary::half(std::span<const NodeIndex> from) {
  std::vector<NodeIndex> out;
  std::uint64_t bits = 0;
  for (std::size_t i = 0; i < from.size(); ++i) {
    if (i % 64 == 0) bits = rng_.next();
    if ((bits >> (i % 64)) & 1U) out.push_back(from[i]);
  }
  return out;
}

void ByzAdversary::make_split(ByzContext& ctx) {
  if (split_ready_) return;
  std::vector<NodeIndex> g(ctx.correct_members().begin(), ctx.correct_members().end());
  for (std::size_t i = g.size(); i > 1; --i) std::swap(g[i - 1], g[rng_.below(i)]);
  a_.assign(g.begin(), g.begin() + static_cast<std::ptrdiff_t>(g.size() / 2));
  b_.assign(g.begin() + static_cast<std::ptrdiff_t>(g.size() / 2), g.end());
  std::sort(a_.begin(), a_.end());
  std::sort(b_.begin(), b_.end());
  split_ready_ = true;
}

const std::vector<NodeIndex>& ByzAdversary::split_a(ByzContext& ctx) {
  make_split(ctx);
  return a_;
}

const std::vector<NodeIndex>& ByzAdversary::split_b(ByzContext& ctx) {
  make_split(ctx);
  return b_;
}

void ByzAdversary::poison_announce(ByzContext& ctx) {
  std::vector<NodeIndex> to = split_a(ctx);
  for (auto b : ctx.coalition())
    if (ctx.elected(b)) to.push_back(b);
  std::sort(to.begin(), to.end());
  for (auto b : ctx.coalition()) ctx.send(b, to, make_id(ctx.id(b)));
}

namespace {

class Silent final : public ByzAdversary {
 public:
  using ByzAdversary::ByzAdversary;
  std::string name() const override { return "silent"; }
  void act(ByzContext&) override {}
};

class SelectiveAnnouncer final : public ByzAdversary {
 public:
  using ByzAdversary::ByzAdversary;
  std::string name() const override { return "selective_announcer"; }

  void act(ByzContext& ctx) override {
    switch (ctx.step().step) {
      case Step::elect:
        // Non-elected members try too; receivers must drop those.
        for (auto b : ctx.coalition()) ctx.send(b, half(ctx.everyone()), make_elect(ctx.id(b)));
        break;
      case Step::announce:
        for (auto b : ctx.coalition()) ctx.send(b, half(ctx.view(b)), make_id(ctx.id(b)));
        break;
      default: ByzAdversary::act(ctx);
    }
  }
};

class ListPoisoner final : public ByzAdversary {
 public:
  using ByzAdversary::ByzAdversary;
  std::string name() const override { return "list_poisoner"; }

  void act(ByzContext& ctx) override {
    if (ctx.step().step != Step::announce) return ByzAdversary::act(ctx);
    for (auto b : ctx.coalition()) {
      std::vector<NodeIndex> g(ctx.correct_members().begin(), ctx.correct_members().end());
      for (std::size_t i = g.size(); i > 1; --i) std::swap(g[i - 1], g[rng_.below(i)]);
      g.resize(g.size() / 2);
      for (auto c : ctx.coalition())
        if (ctx.elected(c)) g.push_back(c);
      std::sort(g.begin(), g.end());
      ctx.send(b, g, make_id(ctx.id(b)));
    }
  }
};

// Both halves of the split see a self-consistent list (with or without the coalition's ids);
// the coalition backs each half's value with INIT and ECHO.
class ValidatorEquivocator final : public ByzAdversary {
 public:
  using ByzAdversary::ByzAdversary;
  std::string name() const override { return "validator_equivocator"; }

  void act(ByzContext& ctx) override {
    switch (ctx.step().step) {
      case Step::announce: poison_announce(ctx); break;
      case Step::val_init: equivocate(ctx, MessageType::val_init); break;
      case Step::val_echo: equivocate(ctx, MessageType::val_echo); break;
      case Step::diff: split_send(ctx, make_diff(true), make_diff(false)); break;
      default: ByzAdversary::act(ctx);
    }
  }

 private:
  void equivocate(ByzContext& ctx, MessageType kind) {
    for (auto b : ctx.coalition()) {
      if (!ctx.elected(b)) continue;
      IdentityList with = ctx.list(b), without = ctx.list(b);
      for (auto c : ctx.coalition()) {
        with.set(ctx.id(c).value, true);
        without.set(ctx.id(c).value, false);
      }
      split_send_from(ctx, b, make_val(kind, ctx.fingerprint(with)), make_val(kind, ctx.fingerprint(without)));
    }
  }

  void split_send(ByzContext& ctx, const ByzMessage& to_a, const ByzMessage& to_b) {
    for (auto b : ctx.coalition())
      if (ctx.elected(b)) split_send_from(ctx, b, to_a, to_b);
  }

  void split_send_from(ByzContext& ctx, NodeIndex b, const ByzMessage& to_a, const ByzMessage& to_b) {
    std::vector<NodeIndex> to;
    std::vector<ByzMessage> ms;
    for (auto v : split_a(ctx)) {
      to.push_back(v);
      ms.push_back(to_a);
    }
    for (auto v : split_b(ctx)) {
      to.push_back(v);
      ms.push_back(to_b);
    }
    ctx.send_each(b, to, ms);
  }
};

// Consensus broadcasts delivered to just fewer correct members than the relay threshold needs,
// then to everyone in the last phase; random DIFF votes and fake NEW values.
class ConsensusSaboteur final : public ByzAdversary {
 public:
  using ByzAdversary::ByzAdversary;
  std::string name() const override { return "consensus_saboteur"; }

  void act(ByzContext& ctx) override {
    const auto& st = ctx.step();
    switch (st.step) {
      case Step::announce: poison_announce(ctx); break;
      case Step::consensus: sabotage(ctx); break;
      case Step::diff:
        for (auto b : ctx.coalition()) {
          if (!ctx.elected(b)) continue;
          std::vector<ByzMessage> ms;
          for (std::size_t k = 0; k < ctx.correct_members().size(); ++k) ms.push_back(make_diff(rng_.bernoulli(0.5)));
          ctx.send_each(b, ctx.correct_members(), ms);
        }
        break;
      case Step::new_id:
        for (auto b : ctx.coalition()) {
          if (!ctx.elected(b)) continue;
          std::vector<ByzMessage> ms;
          for (std::size_t k = 0; k < ctx.everyone().size(); ++k)
            ms.push_back(make_new(1 + rng_.below(ctx.params().n)));
          ctx.send_each(b, ctx.everyone(), ms);
        }
        break;
      default: ByzAdversary::act(ctx);
    }
  }

 private:
  // One receiver set per round, shared by the whole coalition.
  std::vector<NodeIndex> targets(ByzContext& ctx) {
    const auto& st = ctx.step();
    const auto g = ctx.correct_members();
    if (st.cons_round + 2 > st.cons_rounds) return {g.begin(), g.end()};
    std::uint64_t elected = 0;
    for (auto b : ctx.coalition()) elected += ctx.elected(b) ? 1 : 0;
    const auto relay = static_cast<std::uint64_t>(std::floor(ctx.params().c_g / 2.0));
    const std::uint64_t k = std::min<std::uint64_t>(g.size(), relay > elected ? relay - elected : 1);
    std::vector<NodeIndex> pool(g.begin(), g.end());
    for (std::uint64_t i = 0; i < k; ++i) std::swap(pool[i], pool[i + rng_.below(pool.size() - i)]);
    pool.resize(k);
    std::sort(pool.begin(), pool.end());
    return pool;
  }

  void sabotage(ByzContext& ctx) {
    const auto& st = ctx.step();
    const auto to = targets(ctx);
    for (auto b : ctx.coalition()) {
      if (!ctx.elected(b)) continue;
      if (st.cons_round % 2 == 1) {
        ctx.send(b, to, make_cons_init(ConsensusLabel::input));
        ctx.send(b, to, make_cons_init(ConsensusLabel::support));
      } else {
        ctx.send(b, to, make_cons_echo({slot_of(b, ConsensusLabel::input), slot_of(b, ConsensusLabel::support)}));
      }
    }
  }
};

std::mutex& registry_mutex() {
  static std::mutex m;
  return m;
}

std::map<std::string, ByzAdversaryFactory>& registry() {
  static std::map<std::string, ByzAdversaryFactory> r{
      {"silent", [](std::uint64_t s, const nlohmann::json&) { return std::make_unique<Silent>(s); }},
      {"selective_announcer", [](std::uint64_t s, const nlohmann::json&) { return std::make_unique<SelectiveAnnouncer>(s); }},
      {"list_poisoner", [](std::uint64_t s, const nlohmann::json&) { return std::make_unique<ListPoisoner>(s); }},
      {"validator_equivocator",
       [](std::uint64_t s, const nlohmann::json&) { return std::make_unique<ValidatorEquivocator>(s); }},
      {"consensus_saboteur", [](std::uint64_t s, const nlohmann::json&) { return std::make_unique<ConsensusSaboteur>(s); }},
  };
  return r;
}

}  // namespace

std::unique_ptr<ByzAdversary> make_byz_adversary(const std::string& name, std::uint64_t seed,
                                                 const nlohmann::json& params) {
  ByzAdversaryFactory f;
  {
    std::lock_guard lock(registry_mutex());
    auto it = registry().find(name);
    if (it == registry().end()) throw ConfigError("unknown byzantine adversary: " + name);
    f = it->second;
  }
  return f(seed, params);
}

void register_byz_adversary(const std::string& name, ByzAdversaryFactory factory) {
  std::lock_guard lock(registry_mutex());
  registry()[name] = std::move(factory);
}

std::vector<std::string> byz_adversary_names() {
  std::lock_guard lock(registry_mutex());
  std::vector<std::string> out;
  for (const auto& [k, v] : registry()) out.push_back(k);
  return out;
}

}  // namespace rsim::byz
