#include "rsim/byz.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

namespace rsim::byz {

ByzParams ByzParams::make(std::uint64_t n, std::uint64_t N, double eps, std::optional<double> p0_override,
                          bool clamp) {
  if (n < 4) throw ConfigError("byzantine protocol needs n >= 4");
  if (N < n) throw ConfigError("namespace N must be at least n");
  if (!(eps > 0.0 && eps < 1.0 / 3.0)) throw ConfigError("epsilon0 must lie in (0, 1/3)");
  if (ceil_log2(N) > 24) throw ConfigError("namespace N above 2^24 is not supported");
  ByzParams p;
  p.n = n;
  p.N = N;
  p.epsilon0 = eps;
  const double dn = static_cast<double>(n);
  double raw = p0_override ? *p0_override : 8.0 * std::log2(dn) / ((1.0 - 3.0 * eps) * eps * eps * dn);
  if (!(raw > 0.0)) throw ConfigError("committee probability must be positive");
  if (raw > 1.0 && !clamp) throw ConfigError("committee probability exceeds 1 and clamping is disabled");
  p.p0 = std::min(1.0, raw);
  p.c_g = (1.0 - 1.5 * eps) * (2.0 / 3.0 + eps) * p.p0 * dn;
  p.c_hat_g = std::min(dn, 4.0 * p.p0 * dn);
  const double frac = (1.0 / 3.0 - eps) * dn;
  p.f_bound = static_cast<std::uint64_t>(std::ceil(frac - 1e-12)) - 1;
  return p;
}

std::uint64_t ByzParams::consensus_faults() const {
  const auto half = static_cast<std::uint64_t>(std::ceil(c_g / 2.0 - 1e-12));
  return half == 0 ? 0 : half - 1;
}

Segment bot(Segment s) {
  if (s.size() < 2) throw DegenerateInterval("bot of a singleton segment");
  return {s.lo, static_cast<std::uint32_t>((std::uint64_t{s.lo} + s.hi) / 2)};
}

Segment top(Segment s) {
  if (s.size() < 2) throw DegenerateInterval("top of a singleton segment");
  return {static_cast<std::uint32_t>((std::uint64_t{s.lo} + s.hi) / 2 + 1), s.hi};
}

namespace {

// Mask of bits [a, b] inside one word, 0 <= a <= b <= 63.
std::uint64_t span_mask(unsigned a, unsigned b) {
  const std::uint64_t hi = b == 63 ? ~0ULL : ((1ULL << (b + 1)) - 1);
  return hi & ~((1ULL << a) - 1);
}

template <class F>
void for_words(Segment s, F&& f) {
  const std::uint64_t wa = s.lo >> 6, wb = s.hi >> 6;
  for (std::uint64_t w = wa; w <= wb; ++w) {
    const unsigned a = w == wa ? (s.lo & 63) : 0;
    const unsigned b = w == wb ? (s.hi & 63) : 63;
    f(w, span_mask(a, b));
  }
}

}  // namespace

void IdentityList::set(std::uint64_t i, bool v) {
  if (v) words_[i >> 6] |= 1ULL << (i & 63);
  else words_[i >> 6] &= ~(1ULL << (i & 63));
}

std::uint64_t IdentityList::count(Segment s) const {
  std::uint64_t c = 0;
  for_words(s, [&](std::uint64_t w, std::uint64_t m) { c += std::popcount(words_[w] & m); });
  return c;
}

void IdentityList::fill_leftmost(Segment s, std::uint64_t ones) {
  for_words(s, [&](std::uint64_t w, std::uint64_t m) { words_[w] &= ~m; });
  if (ones == 0) return;
  const std::uint64_t k = std::min<std::uint64_t>(ones, s.size());
  for_words({s.lo, static_cast<std::uint32_t>(s.lo + k - 1)},
            [&](std::uint64_t w, std::uint64_t m) { words_[w] |= m; });
}

bool IdentityList::equal_on(const IdentityList& other, Segment s) const {
  bool eq = true;
  for_words(s, [&](std::uint64_t w, std::uint64_t m) { eq = eq && ((words_[w] ^ other.words_[w]) & m) == 0; });
  return eq;
}

std::vector<std::uint32_t> IdentityList::ones(Segment s) const {
  std::vector<std::uint32_t> out;
  for_words(s, [&](std::uint64_t w, std::uint64_t m) {
    for (std::uint64_t x = words_[w] & m; x; x &= x - 1)
      out.push_back(static_cast<std::uint32_t>(w * 64 + std::countr_zero(x)));
  });
  return out;
}

std::uint64_t IdentityList::rank(std::uint64_t i) const {
  if (i == 0) return 0;
  return count({1, static_cast<std::uint32_t>(std::min(i, N_))});
}

RankIndex::RankIndex(const IdentityList& L) : list_(&L) {
  const std::uint64_t words = (L.size() + 64) / 64;
  block_.resize(words + 1, 0);
  for (std::uint64_t w = 0; w < words; ++w) {
    const std::uint64_t lo = std::max<std::uint64_t>(w * 64, 1);
    const std::uint64_t hi = std::min<std::uint64_t>(w * 64 + 63, L.size());
    block_[w + 1] = block_[w] + (lo <= hi ? L.count({static_cast<std::uint32_t>(lo), static_cast<std::uint32_t>(hi)}) : 0);
  }
}

std::uint64_t RankIndex::rank(std::uint64_t i) const {
  if (i == 0) return 0;
  i = std::min(i, list_->size());
  const std::uint64_t w = i >> 6;
  const std::uint64_t lo = std::max<std::uint64_t>(w * 64, 1);
  return block_[w] + (lo <= i ? list_->count({static_cast<std::uint32_t>(lo), static_cast<std::uint32_t>(i)}) : 0);
}

namespace {

mpz_class random_below(const SharedRandomness& shared, std::uint64_t iteration, std::uint64_t salt,
                       const mpz_class& bound) {
  // 256 random bits reduced mod bound; the bias is below 2^-64 for bounds of at most 192 bits.
  mpz_class r = 0;
  for (unsigned k = 0; k < 4; ++k) {
    r <<= 64;
    const std::uint64_t w = shared.word(DrawKind::segment_hash, iteration, salt * 4 + k);
    r += mpz_class(static_cast<unsigned long>(w >> 32)) * mpz_class(4294967296UL) +
         mpz_class(static_cast<unsigned long>(w & 0xffffffffULL));
  }
  return r % bound;
}

Fingerprint to_fingerprint(const mpz_class& h, std::uint64_t count) {
  Fingerprint f;
  f.count = count;
  std::size_t n = 0;
  mpz_export(f.hash.data(), &n, -1, sizeof(std::uint64_t), 0, 0, h.get_mpz_t());
  return f;
}

}  // namespace

SegmentHasher::SegmentHasher(std::uint64_t N, const SharedRandomness& shared)
    : N_(N), width_(8 * std::max(1u, ceil_log2(N))), shared_(&shared) {
  mpz_class bound;
  mpz_ui_pow_ui(bound.get_mpz_t(), N, 8);
  mpz_class cap = mpz_class(1) << width_;
  mpz_nextprime(prime_.get_mpz_t(), mpz_class(bound - 1).get_mpz_t());
  if (prime_ >= cap) {
    // N is a power of two, so N^8 already needs width + 1 bits; take the largest prime below 2^width.
    prime_ = cap - 1;
    while (mpz_probab_prime_p(prime_.get_mpz_t(), 30) == 0) prime_ -= 1;
  }
}

const SegmentHasher::Point& SegmentHasher::point(std::uint64_t iteration) const {
  auto it = points_.find(iteration);
  if (it != points_.end()) return it->second;
  Point pt;
  mpz_class x = random_below(*shared_, iteration, 0, prime_);
  pt.shift = random_below(*shared_, iteration, 1, prime_);
  const unsigned bits = bit_length(N_);
  pt.pow2.reserve(bits);
  for (unsigned k = 0; k < bits; ++k) {
    pt.pow2.push_back(x);
    x = (x * x) % prime_;
  }
  if (points_.size() > 64) points_.clear();
  return points_.emplace(iteration, std::move(pt)).first->second;
}

Fingerprint SegmentHasher::hash_positions(std::uint64_t iteration, const std::vector<std::uint32_t>& ones) const {
  const Point& pt = point(iteration);
  mpz_class acc = pt.shift;
  mpz_class term;
  for (std::uint32_t i : ones) {
    term = 1;
    for (std::uint32_t b = i; b; b &= b - 1) {
      term *= pt.pow2[static_cast<unsigned>(std::countr_zero(b))];
      term %= prime_;
    }
    acc += term;
  }
  acc %= prime_;
  return to_fingerprint(acc, ones.size());
}

Fingerprint SegmentHasher::hash(std::uint64_t iteration, const IdentityList& L, Segment s) const {
  return hash_positions(iteration, L.ones(s));
}

// ---- messages ---------------------------------------------------------------------------------

std::uint64_t ByzMessage::logical_count() const {
  if (kind == MessageType::consensus_msg && ckind == ConsensusKind::echo) return slots ? slots->size() : 0;
  return 1;
}

std::uint64_t ByzMessage::bits_each(const Widths& w) const {
  switch (kind) {
    case MessageType::elect:
    case MessageType::id_announce: return kTagBits + w.id;
    case MessageType::val_init:
    case MessageType::val_echo: return kTagBits + w.hash + w.count;
    case MessageType::diff_report: return kTagBits + 1;
    case MessageType::new_id: return kTagBits + 1 + w.pos;
    case MessageType::consensus_msg: return kTagBits + 2 + (ckind == ConsensusKind::echo ? w.id : 0);
    default: throw EncodeError("not a byzantine-protocol message type");
  }
}

ByzMessage make_elect(NodeId id) {
  ByzMessage m;
  m.kind = MessageType::elect;
  m.id = id;
  return m;
}

ByzMessage make_id(NodeId id) {
  ByzMessage m;
  m.kind = MessageType::id_announce;
  m.id = id;
  return m;
}

ByzMessage make_val(MessageType kind, const Fingerprint& f) {
  ByzMessage m;
  m.kind = kind;
  m.value = f;
  return m;
}

ByzMessage make_diff(bool bit) {
  ByzMessage m;
  m.kind = MessageType::diff_report;
  m.bit = bit;
  return m;
}

ByzMessage make_new(std::optional<std::uint64_t> nid) {
  ByzMessage m;
  m.kind = MessageType::new_id;
  m.new_id = nid;
  return m;
}

ByzMessage make_cons_init(ConsensusLabel label) {
  ByzMessage m;
  m.kind = MessageType::consensus_msg;
  m.ckind = ConsensusKind::init;
  m.label = label;
  return m;
}

ByzMessage make_cons_echo(std::vector<std::uint32_t> slots) {
  ByzMessage m;
  m.kind = MessageType::consensus_msg;
  m.ckind = ConsensusKind::echo;
  m.slots = std::make_shared<const std::vector<std::uint32_t>>(std::move(slots));
  return m;
}

BitString encode(const ByzMessage& m, const Widths& w, std::size_t which, NodeId subject) {
  BitWriter out;
  out.put_tag(m.kind);
  switch (m.kind) {
    case MessageType::elect:
    case MessageType::id_announce: out.put_id(m.id, w); break;
    case MessageType::val_init:
    case MessageType::val_echo: {
      unsigned left = w.hash;
      for (int k = 2; k >= 0; --k) {
        const unsigned lo = 64u * static_cast<unsigned>(k);
        if (left <= lo) continue;
        const unsigned take = std::min(64u, left - lo);
        out.put(m.value.hash[static_cast<unsigned>(k)], take);
      }
      if (m.value.count > w.N) throw EncodeError("segment count exceeds N");
      out.put(m.value.count, w.count);
      break;
    }
    case MessageType::diff_report: out.put(m.bit ? 1 : 0, 1); break;
    case MessageType::new_id:
      out.put(m.new_id ? 1 : 0, 1);
      if (m.new_id && (*m.new_id < 1 || *m.new_id > w.n)) throw EncodeError("new identity out of [1, n]");
      out.put(m.new_id ? *m.new_id - 1 : 0, w.pos);
      break;
    case MessageType::consensus_msg:
      out.put(static_cast<std::uint64_t>(m.ckind), 1);
      if (m.ckind == ConsensusKind::init) {
        out.put(static_cast<std::uint64_t>(m.label), 1);
      } else {
        if (!m.slots || which >= m.slots->size()) throw EncodeError("echo slot out of range");
        out.put((*m.slots)[which] & 1U, 1);
        out.put_id(subject, w);
      }
      break;
    default: throw EncodeError("not a byzantine-protocol message type");
  }
  return out.take();
}

DecodedByz decode_byz(const BitString& bits, const Widths& w) {
  BitReader in(bits);
  DecodedByz d;
  d.kind = in.get_tag();
  switch (d.kind) {
    case MessageType::elect:
    case MessageType::id_announce: d.id = in.get_id(w); break;
    case MessageType::val_init:
    case MessageType::val_echo: {
      unsigned left = w.hash;
      for (int k = 2; k >= 0; --k) {
        const unsigned lo = 64u * static_cast<unsigned>(k);
        if (left <= lo) continue;
        d.value.hash[static_cast<unsigned>(k)] = in.get(std::min(64u, left - lo));
      }
      d.value.count = in.get(w.count);
      break;
    }
    case MessageType::diff_report: d.bit = in.get(1) != 0; break;
    case MessageType::new_id: {
      const bool present = in.get(1) != 0;
      const std::uint64_t v = in.get(w.pos);
      if (present) d.new_id = v + 1;
      break;
    }
    case MessageType::consensus_msg:
      d.ckind = static_cast<ConsensusKind>(in.get(1));
      d.label = static_cast<ConsensusLabel>(in.get(1));
      if (d.ckind == ConsensusKind::echo) d.id = in.get_id(w);
      break;
    default: throw EncodeError("not a byzantine-protocol message type");
  }
  if (!in.exhausted()) throw EncodeError("trailing bits after message");
  return d;
}

}  // namespace rsim::byz
