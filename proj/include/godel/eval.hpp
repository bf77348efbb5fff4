#pragma once

#include <bit>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <unordered_map>
#include <vector>

#include <gmpxx.h>

#include "godel/ast.hpp"

namespace godel {

enum class Verdict { True, False, Unknown };

inline const char* verdict_name(Verdict v) {
  switch (v) {
    case Verdict::True: return "True";
    case Verdict::False: return "False";
    default: return "Unknown";
  }
}

inline Verdict vnot(Verdict v) {
  if (v == Verdict::True) return Verdict::False;
  if (v == Verdict::False) return Verdict::True;
  return Verdict::Unknown;
}

struct EvalCaps {
  std::uint64_t witness_cap = 1024;     // search range per unbounded quantifier
  std::uint64_t node_budget = 1000000;  // total node visits
  bool accelerate = false;              // consult the accelerator registry
  std::uint64_t accel_fuel = 1000000;   // fuel handed to program-backed accelerators
};

// Values for free variables (by free index), e.g. binding the fixed-point
// variable to a huge code value without materializing its numeral.
using FreeEnv = std::map<std::uint32_t, mpz_class>;

// An accelerator decides a registered subformula instance from its free
// variable values (resolver gives the value of free index j relative to the
// registered node; nullopt while the evaluator is still solving for it). It
// must be semantically faithful: True/False only when the formula is.
using AccelResolver = std::function<std::optional<mpz_class>(std::uint32_t)>;
using AccelFn = std::function<Verdict(const AccelResolver&, const EvalCaps&)>;

// A witness hook marks a registered formula instance as functional in its free
// variable 0: for any values of the remaining free variables there is at most
// one value of free 0 making it true, and the hook computes that value (or
// nullopt when it cannot tell within the caps). The evaluator uses it both to
// decide the instance pointwise and to fill existential slots directly.
using WitnessFn = std::function<std::optional<mpz_class>(const AccelResolver&, const EvalCaps&)>;

namespace detail {

struct AccelRegistry {
  static AccelRegistry& inst() {
    static AccelRegistry* r = new AccelRegistry;
    return *r;
  }
  std::mutex mu;
  std::unordered_map<const Node*, AccelFn> map;
  std::unordered_map<const Node*, WitnessFn> wit;
};

}  // namespace detail

inline void register_accel(const Node* n, AccelFn fn) {
  auto& r = detail::AccelRegistry::inst();
  std::lock_guard<std::mutex> lock(r.mu);
  r.map[n] = std::move(fn);
}

inline const AccelFn* find_accel(const Node* n) {
  auto& r = detail::AccelRegistry::inst();
  std::lock_guard<std::mutex> lock(r.mu);
  auto it = r.map.find(n);
  return it == r.map.end() ? nullptr : &it->second;
}

inline void register_witness(const Node* n, WitnessFn fn) {
  auto& r = detail::AccelRegistry::inst();
  std::lock_guard<std::mutex> lock(r.mu);
  r.wit[n] = std::move(fn);
}

inline const WitnessFn* find_witness(const Node* n) {
  auto& r = detail::AccelRegistry::inst();
  std::lock_guard<std::mutex> lock(r.mu);
  auto it = r.wit.find(n);
  return it == r.wit.end() ? nullptr : &it->second;
}

namespace detail {

class Evaluator {
 public:
  Evaluator(const FreeEnv* free, const EvalCaps& caps)
      : free_(free), caps_(caps), budget_(caps.node_budget) {}

  Verdict formula(const Node* f) {
    if (!spend()) return Verdict::Unknown;
    if (caps_.accelerate) {
      if (const AccelFn* fn = find_accel(f)) {
        AccelResolver res = [this](std::uint32_t j) { return term(var(j)); };
        return (*fn)(res, caps_);
      }
      if (const WitnessFn* wf = find_witness(f)) {
        auto yv = term(var(0));
        if (!yv) return Verdict::Unknown;
        AccelResolver res = [this](std::uint32_t j) { return term(var(j)); };
        auto w = (*wf)(res, caps_);
        if (!w) return Verdict::Unknown;
        return *yv == *w ? Verdict::True : Verdict::False;
      }
    }
    switch (f->tag) {
      case Tag::Equal: {
        if (f->kid[0] == f->kid[1]) return Verdict::True;  // t=t holds under any env
        auto a = term(f->kid[0]);
        auto b = term(f->kid[1]);
        if (!a || !b) return Verdict::Unknown;
        return *a == *b ? Verdict::True : Verdict::False;
      }
      case Tag::Rel:
        return Verdict::Unknown;  // no standard interpretation in arithmetic
      case Tag::Not:
        return vnot(formula(f->kid[0]));
      case Tag::And: {
        Verdict a = formula(f->kid[0]);
        if (a == Verdict::False) return Verdict::False;
        Verdict b = formula(f->kid[1]);
        if (b == Verdict::False) return Verdict::False;
        if (a == Verdict::True && b == Verdict::True) return Verdict::True;
        return Verdict::Unknown;
      }
      case Tag::Or: {
        Verdict a = formula(f->kid[0]);
        if (a == Verdict::True) return Verdict::True;
        Verdict b = formula(f->kid[1]);
        if (b == Verdict::True) return Verdict::True;
        if (a == Verdict::False && b == Verdict::False) return Verdict::False;
        return Verdict::Unknown;
      }
      case Tag::Implies: {
        Verdict a = formula(f->kid[0]);
        if (a == Verdict::False) return Verdict::True;
        Verdict b = formula(f->kid[1]);
        if (b == Verdict::True) return Verdict::True;
        if (a == Verdict::True && b == Verdict::False) return Verdict::False;
        return Verdict::Unknown;
      }
      case Tag::ForAll:
      case Tag::Exists:
        return quant_block(f);
      default:
        return Verdict::Unknown;
    }
  }

  std::optional<mpz_class> term(const Node* t) {
    if (!spend()) return std::nullopt;
    switch (t->tag) {
      case Tag::Numeral:
        return *t->num;
      case Tag::Variable: {
        std::uint32_t k = t->sym;
        if (k < env_.size()) return env_[env_.size() - 1 - k];
        if (free_) {
          auto it = free_->find(k - static_cast<std::uint32_t>(env_.size()));
          if (it != free_->end()) return it->second;
        }
        return std::nullopt;
      }
      case Tag::Const:
        return mpz_class(0);
      case Tag::Apply: {
        auto a = term(t->kid[0]);
        if (!a) return std::nullopt;
        if (t->sym == kFnS) return *a + 1;
        auto b = term(t->kid[1]);
        if (!b) return std::nullopt;
        return t->sym == kFnAdd ? mpz_class(*a + *b) : mpz_class(*a * *b);
      }
      default:
        return std::nullopt;
    }
  }

 private:
  struct Conjunct {
    const Node* f;
    bool negated;
    std::uint64_t mask;  // free variables of f, as bits at the block's level
  };

  static constexpr std::uint64_t kMaskBig = 1ull << 63;

  // Free-variable set of n as a bitmask relative to n's own level. Indices
  // 63 and above collapse into kMaskBig, read as "may reference anything".
  std::uint64_t mask_of(const Node* n) {
    auto it = mask_cache_.find(n);
    if (it != mask_cache_.end()) return it->second;
    std::uint64_t m = 0;
    switch (n->tag) {
      case Tag::Variable:
        m = n->sym < 63 ? (1ull << n->sym) : kMaskBig;
        break;
      case Tag::Numeral:
      case Tag::Const:
        break;
      case Tag::ForAll:
      case Tag::Exists: {
        std::uint64_t k = mask_of(n->kid[0]);
        m = ((k & ~kMaskBig) >> 1) | (k & kMaskBig);
        break;
      }
      default:
        for (std::uint32_t i = 0; i < n->nkid; i++) m |= mask_of(n->kid[i]);
        break;
    }
    mask_cache_.emplace(n, m);
    return m;
  }

  // Whether the conjunct reads a quantifier slot that has no value yet.
  // Such a conjunct cannot be decided and often cannot even be evaluated
  // cheaply, so enumeration fills the slot before it is looked at.
  bool refs_unfilled(std::uint64_t mask) const {
    if (mask & kMaskBig) {
      for (const auto& s : env_)
        if (!s) return true;
      return false;
    }
    while (mask) {
      unsigned i = static_cast<unsigned>(std::countr_zero(mask));
      mask &= mask - 1;
      if (i < env_.size() && !env_[env_.size() - 1 - i]) return true;
    }
    return false;
  }

  bool spend() {
    if (budget_ == 0) return false;
    budget_--;
    return true;
  }

  // Splits f (or its negation) into a conjunction-equivalent list.
  void collect(const Node* f, bool neg, std::vector<Conjunct>& out) {
    if (!neg) {
      if (f->tag == Tag::And) {
        collect(f->kid[0], false, out);
        collect(f->kid[1], false, out);
        return;
      }
      if (f->tag == Tag::Not) {
        collect(f->kid[0], true, out);
        return;
      }
    } else {
      if (f->tag == Tag::Or) {
        collect(f->kid[0], true, out);
        collect(f->kid[1], true, out);
        return;
      }
      if (f->tag == Tag::Implies) {
        collect(f->kid[0], false, out);
        collect(f->kid[1], true, out);
        return;
      }
      if (f->tag == Tag::Not) {
        collect(f->kid[0], false, out);
        return;
      }
    }
    out.push_back({f, neg, mask_of(f)});
  }

  // --- quantifier block solving ---
  //
  // A maximal same-quantifier chain is solved as one block: forced equations
  // among the matrix conjuncts are propagated first, then remaining unknowns
  // are enumerated, using explicit <=-bounds where the matrix provides them.
  // True/False are only returned when cap-independent: a verified witness, a
  // forced assignment that fails, or an exactly exhausted bounded search.

  struct EnumState {
    std::vector<Conjunct>* conj;
    std::size_t base;  // env index of the block's first slot
    std::size_t m;     // slot count
  };

  Verdict quant_block(const Node* f) {
    bool universal = f->tag == Tag::ForAll;
    Tag t = f->tag;
    const Node* matrix = f->kid[0];
    std::size_t m = 1;
    while (matrix->tag == t &&
           !(caps_.accelerate && (find_accel(matrix) || find_witness(matrix)))) {
      matrix = matrix->kid[0];
      m++;
    }

    std::vector<Conjunct> conj;
    collect(matrix, universal, conj);

    // A conjunct false under every environment sinks the block.
    for (const Conjunct& c : conj) {
      if (c.negated && c.f->tag == Tag::Equal && c.f->kid[0] == c.f->kid[1])
        return universal ? Verdict::True : Verdict::False;
    }

    std::size_t base = env_.size();
    for (std::size_t i = 0; i < m; i++) env_.push_back(std::nullopt);
    EnumState st{&conj, base, m};
    Verdict inner = solve(st);
    env_.resize(base);
    return universal ? vnot(inner) : inner;
  }

  // Existential verdict for the current (partially assigned) slot block.
  Verdict solve(EnumState& st) {
    if (budget_ == 0) return Verdict::Unknown;

    std::vector<std::size_t> filled;
    int det = determine(st, filled);
    if (det < 0) {
      unfill(filled);
      return Verdict::False;  // forced equation contradicts: no witness below this prefix
    }

    // prune: any conjunct already decidable and false kills this subtree;
    // conjuncts still waiting on a slot value are deferred to enumeration
    for (const Conjunct& c : *st.conj) {
      if (refs_unfilled(c.mask)) continue;
      Verdict v = formula(c.f);
      if (c.negated) v = vnot(v);
      if (v == Verdict::False) {
        unfill(filled);
        return Verdict::False;
      }
      if (budget_ == 0) {
        unfill(filled);
        return Verdict::Unknown;
      }
    }

    std::size_t u = st.base;
    while (u < st.base + st.m && env_[u].has_value()) u++;
    if (u == st.base + st.m) {
      Verdict v = verify(*st.conj);
      unfill(filled);
      return v;
    }

    bool exact = true;
    mpz_class hi;
    if (auto b = slot_bound(st, u)) {
      hi = *b;
    } else {
      exact = false;
      hi = mpz_class(static_cast<unsigned long>(caps_.witness_cap)) - 1;
    }

    bool saw_unknown = false;
    int unknown_streak = 0;
    for (mpz_class v = 0; v <= hi; v++) {
      if (budget_ == 0) {
        saw_unknown = true;
        break;
      }
      env_[u] = v;
      Verdict r = solve(st);
      if (r == Verdict::True) {
        env_[u] = std::nullopt;
        unfill(filled);
        return Verdict::True;
      }
      if (r == Verdict::Unknown) {
        saw_unknown = true;
        // a capped search that keeps hitting undecidable candidates is not
        // going to produce a witness; stop burning budget on it
        if (!exact && ++unknown_streak >= 8) break;
      } else {
        unknown_streak = 0;
      }
    }
    env_[u] = std::nullopt;
    unfill(filled);
    if (!exact || saw_unknown) return Verdict::Unknown;
    return Verdict::False;
  }

  Verdict verify(const std::vector<Conjunct>& conj) {
    Verdict acc = Verdict::True;
    for (const Conjunct& c : conj) {
      Verdict v = formula(c.f);
      if (c.negated) v = vnot(v);
      if (v == Verdict::False) return Verdict::False;
      if (v == Verdict::Unknown) acc = Verdict::Unknown;
    }
    return acc;
  }

  void unfill(const std::vector<std::size_t>& filled) {
    for (std::size_t i : filled) env_[i] = std::nullopt;
  }

  // Propagates forced equations. Returns -1 on contradiction, else the number
  // of newly filled slots (recorded in `filled` for undo).
  int determine(EnumState& st, std::vector<std::size_t>& filled) {
    bool progress = true;
    int made = 0;
    while (progress) {
      progress = false;
      // a witness-registered conjunct pins the block's innermost slot: the
      // conjunct holds for at most one value of its free 0, and only that
      // value can extend the current assignment
      if (caps_.accelerate && !env_.empty()) {
        std::size_t pos = env_.size() - 1;
        if (pos >= st.base && pos < st.base + st.m && !env_[pos]) {
          for (const Conjunct& c : *st.conj) {
            if (c.negated) continue;
            const WitnessFn* wf = find_witness(c.f);
            if (!wf) continue;
            AccelResolver res = [this](std::uint32_t j) { return term(var(j)); };
            if (auto wv = (*wf)(res, caps_)) {
              env_[pos] = *wv;
              filled.push_back(pos);
              progress = true;
              made++;
              break;
            }
          }
        }
      }
      for (const Conjunct& c : *st.conj) {
        if (c.negated || c.f->tag != Tag::Equal) continue;
        auto lv = term(c.f->kid[0]);
        auto rv = term(c.f->kid[1]);
        if (lv && rv) {
          if (*lv != *rv) return -1;
          continue;
        }
        int r = 0;
        if (lv) r = solve_side(c.f->kid[1], *lv, st, filled);
        else if (rv) r = solve_side(c.f->kid[0], *rv, st, filled);
        if (r < 0) return -1;
        if (r > 0) {
          progress = true;
          made += r;
        }
      }
    }
    return made;
  }

  // Forces expr == val by structural descent. Returns slots filled, or -1 if
  // the equation cannot hold for any assignment extending the current one.
  int solve_side(const Node* expr, const mpz_class& val, EnumState& st,
                 std::vector<std::size_t>& filled) {
    switch (expr->tag) {
      case Tag::Variable: {
        std::uint32_t k = expr->sym;
        if (k >= env_.size()) return 0;  // free: handled by term()
        std::size_t pos = env_.size() - 1 - k;
        if (pos < st.base || pos >= st.base + st.m) return 0;  // not this block's slot
        if (env_[pos]) return *env_[pos] == val ? 0 : -1;
        env_[pos] = val;
        filled.push_back(pos);
        return 1;
      }
      case Tag::Const:
        return val == 0 ? 0 : -1;
      case Tag::Numeral:
        return *expr->num == val ? 0 : -1;
      case Tag::Apply: {
        if (expr->sym == kFnS) {
          if (val == 0) return -1;
          return solve_side(expr->kid[0], val - 1, st, filled);
        }
        auto a = term(expr->kid[0]);
        auto b = term(expr->kid[1]);
        if (expr->sym == kFnAdd) {
          if (a) {
            if (*a > val) return -1;
            return solve_side(expr->kid[1], val - *a, st, filled);
          }
          if (b) {
            if (*b > val) return -1;
            return solve_side(expr->kid[0], val - *b, st, filled);
          }
        } else {  // mul
          if (a) {
            if (*a == 0) return val == 0 ? 0 : -1;
            if (val % *a != 0) return -1;
            return solve_side(expr->kid[1], val / *a, st, filled);
          }
          if (b) {
            if (*b == 0) return val == 0 ? 0 : -1;
            if (val % *b != 0) return -1;
            return solve_side(expr->kid[0], val / *b, st, filled);
          }
        }
        return monotone_solve(expr, val, st, filled);
      }
      default:
        return 0;
    }
  }

  // Handles one unknown slot occurring (possibly several times) in a term
  // that is strictly increasing in it: binary search gives the unique
  // candidate, and failure refutes the equation.
  int monotone_solve(const Node* expr, const mpz_class& val, EnumState& st,
                     std::vector<std::size_t>& filled) {
    std::size_t slot = SIZE_MAX;
    if (!single_slot(expr, st, 0, &slot) || slot == SIZE_MAX) return 0;
    if (!strict_in(expr, slot, 0)) return 0;

    auto probe = [&](const mpz_class& w) -> std::optional<mpz_class> {
      env_[slot] = w;
      auto r = term(expr);
      env_[slot] = std::nullopt;
      return r;
    };
    // strictness gives expr(w) >= w, so val bounds the search range
    mpz_class lo = 0, hi = val;
    while (lo < hi) {
      if (budget_ == 0) return 0;
      mpz_class mid = (lo + hi) / 2;
      auto v = probe(mid);
      if (!v) return 0;
      if (*v < val) lo = mid + 1;
      else hi = mid;
    }
    auto v = probe(lo);
    if (!v) return 0;
    if (*v != val) return -1;
    env_[slot] = lo;
    filled.push_back(slot);
    return 1;
  }

  // True if every variable in expr is either evaluable or the single slot.
  bool single_slot(const Node* expr, EnumState& st, std::uint32_t depth, std::size_t* slot) {
    switch (expr->tag) {
      case Tag::Const:
      case Tag::Numeral:
        return true;
      case Tag::Variable: {
        std::uint32_t k = expr->sym;
        if (k < depth) return true;  // bound inside expr itself (cannot happen in terms)
        std::uint32_t outer = k - depth;
        if (outer >= env_.size()) return free_ && free_->count(outer - env_.size());
        std::size_t pos = env_.size() - 1 - outer;
        if (env_[pos]) return true;
        if (pos < st.base || pos >= st.base + st.m) return false;
        if (*slot == SIZE_MAX) *slot = pos;
        return *slot == pos;
      }
      case Tag::Apply:
        if (!single_slot(expr->kid[0], st, depth, slot)) return false;
        return expr->nkid == 1 || single_slot(expr->kid[1], st, depth, slot);
      default:
        return false;
    }
  }

  // Strict monotonicity of expr in the slot's value over naturals.
  bool strict_in(const Node* expr, std::size_t slot, std::uint32_t depth) {
    switch (expr->tag) {
      case Tag::Variable: {
        std::uint32_t k = expr->sym;
        if (k < depth) return false;
        std::uint32_t outer = k - depth;
        if (outer >= env_.size()) return false;
        return env_.size() - 1 - outer == slot;
      }
      case Tag::Apply: {
        if (expr->sym == kFnS) return strict_in(expr->kid[0], slot, depth);
        bool sa = strict_in(expr->kid[0], slot, depth);
        bool sb = strict_in(expr->kid[1], slot, depth);
        if (expr->sym == kFnAdd) return sa || sb;
        if (sa && sb) return true;
        if (sa) {
          auto b = term(expr->kid[1]);
          return b && *b >= 1;
        }
        if (sb) {
          auto a = term(expr->kid[0]);
          return a && *a >= 1;
        }
        return false;
      }
      default:
        return false;
    }
  }

  // Upper bound for an unassigned slot from a conjunct of the shape
  // ∃z (S^c(A) + z = B): A <= B - c with A the slot and B evaluable.
  std::optional<mpz_class> slot_bound(EnumState& st, std::size_t pos) {
    std::optional<mpz_class> best;
    for (const Conjunct& c : *st.conj) {
      if (c.negated || c.f->tag != Tag::Exists) continue;
      const Node* body = c.f->kid[0];
      if (body->tag != Tag::Equal) continue;
      const Node* lhs = body->kid[0];
      const Node* rhs = body->kid[1];
      if (lhs->tag != Tag::Apply || lhs->sym != kFnAdd) continue;
      if (lhs->kid[1]->tag != Tag::Variable || lhs->kid[1]->sym != 0) continue;
      // peel S^k to the slot variable
      const Node* a = lhs->kid[0];
      mpz_class offset = 0;
      while (a->tag == Tag::Apply && a->sym == kFnS) {
        offset++;
        a = a->kid[0];
      }
      if (a->tag != Tag::Variable || a->sym < 1) continue;
      std::uint32_t k = a->sym - 1;  // index at matrix level
      if (k >= env_.size()) continue;
      if (env_.size() - 1 - k != pos) continue;
      // evaluate B one binder deeper (it may not use the inner z)
      env_.push_back(std::nullopt);
      auto bval = term(rhs);
      env_.pop_back();
      if (!bval) continue;
      mpz_class hi = *bval - offset;
      if (hi < 0) hi = -1;  // empty range: no witness can satisfy the conjunct
      if (!best || hi < *best) best = hi;
    }
    return best;
  }

  const FreeEnv* free_;
  const EvalCaps& caps_;
  std::uint64_t budget_;
  std::vector<std::optional<mpz_class>> env_;
  std::unordered_map<const Node*, std::uint64_t> mask_cache_;
};

}  // namespace detail

inline Verdict eval_env(Formula f, const FreeEnv& free, const EvalCaps& caps) {
  detail::Evaluator ev(&free, caps);
  return ev.formula(f);
}

inline Verdict eval_standard(Formula s, const EvalCaps& caps = {}) {
  detail::Evaluator ev(nullptr, caps);
  return ev.formula(s);
}

// Formula helpers used across the Δ0 library: every quantifier they introduce
// carries an explicit bound so bounded search can be exhaustive.

inline Formula fold_and(const std::vector<Formula>& fs) {
  if (fs.empty()) throw std::runtime_error("fold_and: empty");
  Formula acc = fs.back();
  for (std::size_t i = fs.size() - 1; i-- > 0;) acc = land(fs[i], acc);
  return acc;
}

inline Formula fold_or(const std::vector<Formula>& fs) {
  if (fs.empty()) throw std::runtime_error("fold_or: empty");
  Formula acc = fs.back();
  for (std::size_t i = fs.size() - 1; i-- > 0;) acc = lor(fs[i], acc);
  return acc;
}

// x <= y as ∃z (x+z = y); the evaluator recognizes this shape for bounds.
inline Formula le(Term x, Term y) {
  return exists(equal(add(lift_free(x), var(0)), lift_free(y)));
}

inline Formula lt(Term x, Term y) { return le(succ(x), y); }

}  // namespace godel
