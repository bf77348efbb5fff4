#pragma once

#include <cstdint>
#include <deque>
#include <mutex>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include <gmpxx.h>

#include "godel/bytes.hpp"

namespace godel {

// Serialization tags. The byte values below are the wire format; codes are the
// big-endian value of 0x01 followed by the tagged preorder serialization.
enum class Tag : std::uint8_t {
  // Internal only: a folded canonical numeral. Serializes as the expanded
  // S/(SS0)* tree and never appears as a byte tag.
  Numeral = 0x0f,
  Variable = 0x10,  // + varint de Bruijn index
  Const = 0x11,     // + varint symbol
  Apply = 0x12,     // + varint symbol + varint argc
  Equal = 0x20,
  Rel = 0x21,       // + varint symbol + varint argc
  Not = 0x22,
  And = 0x23,
  Or = 0x24,
  Implies = 0x25,
  ForAll = 0x26,
  Exists = 0x27,
};

inline bool is_term_tag(Tag t) { return t < Tag::Equal; }
inline bool is_formula_tag(Tag t) { return t >= Tag::Equal && t <= Tag::Exists; }
inline bool is_binder_tag(Tag t) { return t == Tag::ForAll || t == Tag::Exists; }

// Arithmetic signature {0, S/1, +/2, */2}; set signature {∈/2}.
inline constexpr std::uint32_t kFnS = 0;
inline constexpr std::uint32_t kFnAdd = 1;
inline constexpr std::uint32_t kFnMul = 2;
inline constexpr std::uint32_t kRelMem = 0;
inline constexpr std::uint32_t kConstZero = 0;

// Nodes are interned: structurally equal trees are pointer-equal. Variables
// are de Bruijn: Variable(k) under d binders is bound iff k < d, else it is
// free variable number k-d. Binding one more quantifier around a formula
// therefore turns every free-0 occurrence into the new bound variable and
// renumbers the remaining free variables down by one, with no index rewrite.
struct Node {
  Tag tag;
  std::uint8_t nkid;
  std::uint32_t sym;        // variable index, constant symbol, or fn/rel symbol
  const Node* kid[2];
  const mpz_class* num;     // Numeral payload
  std::uint64_t hash;       // structural hash, used for interning only
  std::uint64_t byte_len;   // exact serialized length
  std::uint32_t free_height;  // binders needed above this node to close it
};

using Term = const Node*;
using Formula = const Node*;

inline std::size_t varint_len(std::uint64_t v) {
  std::size_t n = 1;
  while (v >= 0x80) {
    v >>= 7;
    n++;
  }
  return n;
}

// Numerals fold into a single leaf at or above this many bits. Tests lower it
// to exercise folding on small values.
inline std::uint32_t& numeral_fold_bits() {
  static std::uint32_t bits = 257;
  return bits;
}

// Serialized length of the canonical numeral for v:
//   num(0)=0, num(1)=S(0), num(2k)=(SS0)*num(k), num(2k+1)=S((SS0)*num(k)).
// Each nonleading 0-bit costs 11 bytes, each 1-bit 14, plus 5 for S(0).
inline std::uint64_t numeral_byte_len(const mpz_class& v) {
  if (v == 0) return 2;
  std::size_t bits = mpz_sizeinbase(v.get_mpz_t(), 2);
  if (bits == 1) return 5;
  std::uint64_t n = 5;
  for (std::size_t j = 0; j + 1 < bits; j++)
    n += mpz_tstbit(v.get_mpz_t(), j) ? 14 : 11;
  return n;
}

namespace detail {

inline std::uint64_t mix(std::uint64_t h, std::uint64_t v) {
  h ^= v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  return h;
}

inline std::uint64_t num_hash(const mpz_class& v) {
  std::uint64_t h = 0x0full;
  std::size_t limbs = mpz_size(v.get_mpz_t());
  for (std::size_t i = 0; i < limbs; i++) h = mix(h, mpz_getlimbn(v.get_mpz_t(), i));
  return mix(h, limbs);
}

class Arena {
 public:
  static Arena& inst() {
    static Arena* a = new Arena;  // leaked intentionally: nodes live for the process
    return *a;
  }

  const Node* intern(Tag tag, std::uint32_t sym, const Node* a, const Node* b,
                     const mpz_class* numval = nullptr) {
    Node probe{};
    probe.tag = tag;
    probe.sym = sym;
    probe.nkid = b ? 2 : (a ? 1 : 0);
    probe.kid[0] = a;
    probe.kid[1] = b;
    probe.num = numval;
    std::uint64_t h = mix(static_cast<std::uint64_t>(tag) << 32, sym);
    if (a) h = mix(h, a->hash);
    if (b) h = mix(h, b->hash);
    if (numval) h = mix(h, num_hash(*numval));
    probe.hash = h;

    std::lock_guard<std::mutex> lock(mu_);
    auto it = set_.find(&probe);
    if (it != set_.end()) return *it;

    nodes_.push_back(probe);
    Node* n = &nodes_.back();
    if (numval) {
      nums_.push_back(*numval);
      n->num = &nums_.back();
    }
    finish(n);
    set_.insert(n);
    return n;
  }

 private:
  static void finish(Node* n) {
    std::uint64_t head = 1;
    std::uint32_t fh = 0;
    switch (n->tag) {
      case Tag::Numeral:
        n->byte_len = numeral_byte_len(*n->num);
        n->free_height = 0;
        return;
      case Tag::Variable:
        n->byte_len = 1 + varint_len(n->sym);
        n->free_height = n->sym + 1;
        return;
      case Tag::Const:
        head = 1 + varint_len(n->sym);
        break;
      case Tag::Apply:
      case Tag::Rel:
        head = 1 + varint_len(n->sym) + varint_len(n->nkid);
        break;
      default:
        break;
    }
    std::uint64_t len = head;
    for (int i = 0; i < n->nkid; i++) {
      len += n->kid[i]->byte_len;
      fh = std::max(fh, n->kid[i]->free_height);
    }
    if (is_binder_tag(n->tag)) fh = fh > 0 ? fh - 1 : 0;
    n->byte_len = len;
    n->free_height = fh;
  }

  struct Hash {
    std::size_t operator()(const Node* n) const { return static_cast<std::size_t>(n->hash); }
  };
  struct Eq {
    bool operator()(const Node* x, const Node* y) const {
      if (x->tag != y->tag || x->sym != y->sym || x->nkid != y->nkid) return false;
      for (int i = 0; i < x->nkid; i++)
        if (x->kid[i] != y->kid[i]) return false;
      if (x->tag == Tag::Numeral) return *x->num == *y->num;
      return true;
    }
  };

  std::mutex mu_;
  std::deque<Node> nodes_;
  std::deque<mpz_class> nums_;
  std::unordered_set<const Node*, Hash, Eq> set_;
};

}  // namespace detail

inline Term var(std::uint32_t idx) {
  return detail::Arena::inst().intern(Tag::Variable, idx, nullptr, nullptr);
}

inline Term zero() { return detail::Arena::inst().intern(Tag::Const, kConstZero, nullptr, nullptr); }

inline Term succ(Term t) {
  if (!is_term_tag(t->tag)) throw std::runtime_error("succ: argument not a term");
  return detail::Arena::inst().intern(Tag::Apply, kFnS, t, nullptr);
}

inline Term add(Term a, Term b) {
  if (!is_term_tag(a->tag) || !is_term_tag(b->tag)) throw std::runtime_error("add: not a term");
  return detail::Arena::inst().intern(Tag::Apply, kFnAdd, a, b);
}

inline Term mul(Term a, Term b) {
  if (!is_term_tag(a->tag) || !is_term_tag(b->tag)) throw std::runtime_error("mul: not a term");
  return detail::Arena::inst().intern(Tag::Apply, kFnMul, a, b);
}

inline Formula equal(Term a, Term b) {
  if (!is_term_tag(a->tag) || !is_term_tag(b->tag)) throw std::runtime_error("equal: not a term");
  return detail::Arena::inst().intern(Tag::Equal, 0, a, b);
}

inline Formula mem(Term a, Term b) {
  if (!is_term_tag(a->tag) || !is_term_tag(b->tag)) throw std::runtime_error("mem: not a term");
  return detail::Arena::inst().intern(Tag::Rel, kRelMem, a, b);
}

inline Formula lnot(Formula a) {
  if (!is_formula_tag(a->tag)) throw std::runtime_error("lnot: not a formula");
  return detail::Arena::inst().intern(Tag::Not, 0, a, nullptr);
}

inline Formula land(Formula a, Formula b) {
  if (!is_formula_tag(a->tag) || !is_formula_tag(b->tag)) throw std::runtime_error("land: not a formula");
  return detail::Arena::inst().intern(Tag::And, 0, a, b);
}

inline Formula lor(Formula a, Formula b) {
  if (!is_formula_tag(a->tag) || !is_formula_tag(b->tag)) throw std::runtime_error("lor: not a formula");
  return detail::Arena::inst().intern(Tag::Or, 0, a, b);
}

inline Formula implies(Formula a, Formula b) {
  if (!is_formula_tag(a->tag) || !is_formula_tag(b->tag)) throw std::runtime_error("implies: not a formula");
  return detail::Arena::inst().intern(Tag::Implies, 0, a, b);
}

inline Formula forall(Formula body) {
  if (!is_formula_tag(body->tag)) throw std::runtime_error("forall: not a formula");
  return detail::Arena::inst().intern(Tag::ForAll, 0, body, nullptr);
}

inline Formula exists(Formula body) {
  if (!is_formula_tag(body->tag)) throw std::runtime_error("exists: not a formula");
  return detail::Arena::inst().intern(Tag::Exists, 0, body, nullptr);
}

inline Term numeral_leaf(const mpz_class& v) {
  return detail::Arena::inst().intern(Tag::Numeral, 0, nullptr, nullptr, &v);
}

inline Term numeral(const mpz_class& v) {
  if (sgn(v) < 0) throw std::runtime_error("numeral: negative");
  std::size_t bits = v == 0 ? 0 : mpz_sizeinbase(v.get_mpz_t(), 2);
  if (bits >= numeral_fold_bits()) return numeral_leaf(v);
  if (v == 0) return zero();
  Term ss0 = succ(succ(zero()));
  Term t = succ(zero());
  for (std::size_t j = bits - 1; j-- > 0;) {
    t = mul(ss0, t);
    if (mpz_tstbit(v.get_mpz_t(), j)) t = succ(t);
  }
  return t;
}

inline Term numeral(std::uint64_t n) { return numeral(mpz_class(static_cast<unsigned long>(n))); }

inline bool is_closed(const Node* n) { return n->free_height == 0; }
inline bool is_sentence(const Node* n) { return is_formula_tag(n->tag) && n->free_height == 0; }

// Free variable numbers of n (k - depth over free occurrences).
inline void collect_free(const Node* n, std::uint32_t depth, std::set<std::uint32_t>& out) {
  if (n->free_height <= depth) return;  // every outward reference is already bound
  if (n->tag == Tag::Variable) {
    if (n->sym >= depth) out.insert(n->sym - depth);
    return;
  }
  std::uint32_t d2 = depth + (is_binder_tag(n->tag) ? 1 : 0);
  for (int i = 0; i < n->nkid; i++) collect_free(n->kid[i], d2, out);
}

inline std::vector<std::uint32_t> free_vars(const Node* n) {
  std::set<std::uint32_t> s;
  collect_free(n, 0, s);
  return {s.begin(), s.end()};
}

// Capture-avoiding substitution of a closed term for free variable `target`.
// Other free variables keep their numbers.
inline const Node* substitute(const Node* f, std::uint32_t target, Term t, std::uint32_t depth = 0) {
  if (!is_closed(t)) throw std::runtime_error("substitute: term not closed");
  if (f->free_height <= depth) return f;
  if (f->tag == Tag::Variable) {
    if (f->sym >= depth && f->sym - depth == target) return t;
    return f;
  }
  std::uint32_t d2 = depth + (is_binder_tag(f->tag) ? 1 : 0);
  const Node* k0 = f->nkid > 0 ? substitute(f->kid[0], target, t, d2) : nullptr;
  const Node* k1 = f->nkid > 1 ? substitute(f->kid[1], target, t, d2) : nullptr;
  if (k0 == f->kid[0] && k1 == f->kid[1]) return f;
  return detail::Arena::inst().intern(f->tag, f->sym, k0, k1);
}

// Renumber free variables >= `from` up by `amount` (used by the quantifier
// scheme that adds a vacuous binder).
inline const Node* lift_free(const Node* f, std::uint32_t amount = 1, std::uint32_t from = 0,
                             std::uint32_t depth = 0) {
  if (amount == 0 || f->free_height <= depth) return f;
  if (f->tag == Tag::Variable) {
    if (f->sym >= depth && f->sym - depth >= from) return var(f->sym + amount);
    return f;
  }
  std::uint32_t d2 = depth + (is_binder_tag(f->tag) ? 1 : 0);
  const Node* k0 = f->nkid > 0 ? lift_free(f->kid[0], amount, from, d2) : nullptr;
  const Node* k1 = f->nkid > 1 ? lift_free(f->kid[1], amount, from, d2) : nullptr;
  if (k0 == f->kid[0] && k1 == f->kid[1]) return f;
  return detail::Arena::inst().intern(f->tag, f->sym, k0, k1);
}

// Distinct interned nodes reachable from n. Shared subtrees count once, so
// numerals built by the halving recursion stay logarithmic.
inline std::size_t node_count(const Node* n) {
  std::unordered_set<const Node*> seen;
  std::vector<const Node*> stack{n};
  while (!stack.empty()) {
    const Node* c = stack.back();
    stack.pop_back();
    if (!seen.insert(c).second) continue;
    for (int i = 0; i < c->nkid; i++) stack.push_back(c->kid[i]);
  }
  return seen.size();
}

namespace detail {

// Emits the canonical numeral byte string for v without building the tree.
// Production for bit j (LSB first): odd bits prepend S, every nonleading bit
// wraps in (SS0)*_, and the leading bit closes with S(0).
template <class Sink>
void emit_numeral_bytes(const mpz_class& v, Sink&& sink) {
  static const char kZero[] = {0x11, 0x00};
  static const char kSZero[] = {0x12, 0x00, 0x01, 0x11, 0x00};
  static const char kSHead[] = {0x12, 0x00, 0x01};
  static const char kMulSS0[] = {0x12, 0x02, 0x02, 0x12, 0x00, 0x01, 0x12, 0x00, 0x01, 0x11, 0x00};
  if (v == 0) {
    sink(kZero, sizeof kZero);
    return;
  }
  std::size_t bits = mpz_sizeinbase(v.get_mpz_t(), 2);
  for (std::size_t j = 0; j + 1 < bits; j++) {
    if (mpz_tstbit(v.get_mpz_t(), j)) sink(kSHead, sizeof kSHead);
    sink(kMulSS0, sizeof kMulSS0);
  }
  sink(kSZero, sizeof kSZero);
}

}  // namespace detail

// Preorder serialization per the tag table. Sink is called with byte chunks.
template <class Sink>
void serialize_node(const Node* root, Sink&& sink) {
  std::vector<const Node*> stack{root};
  Bytes head;
  while (!stack.empty()) {
    const Node* n = stack.back();
    stack.pop_back();
    if (n->tag == Tag::Numeral) {
      detail::emit_numeral_bytes(*n->num, sink);
      continue;
    }
    head.clear();
    head.push_back(static_cast<char>(n->tag));
    switch (n->tag) {
      case Tag::Variable:
      case Tag::Const:
        put_varint(head, n->sym);
        break;
      case Tag::Apply:
      case Tag::Rel:
        put_varint(head, n->sym);
        put_varint(head, n->nkid);
        break;
      default:
        break;
    }
    sink(head.data(), head.size());
    for (int i = n->nkid; i-- > 0;) stack.push_back(n->kid[i]);
  }
}

inline Bytes serialize(const Node* n) {
  Bytes out;
  out.reserve(n->byte_len);
  serialize_node(n, [&](const char* p, std::size_t len) { out.append(p, len); });
  return out;
}

// De Bruijn form is the only form nodes ever take, so this is the identity;
// it exists to give the round-trip laws a name.
inline const Node* canonicalize(const Node* n) { return n; }

}  // namespace godel
