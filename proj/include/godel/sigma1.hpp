#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <gmpxx.h>

#include "godel/ast.hpp"
#include "godel/eval.hpp"
#include "godel/machine.hpp"

// Arithmetization of register machine runs.
//
// A terminating run of program p is coded as a single number h: the base-N
// digit string of h, N = 2^m, splits into blocks of w = R+2 digits, one block
// per configuration. Fields of a block, low digit to high:
//
//   r_{R-1}, ..., r_1, r_0, counter, pc+1
//
// so register r sits at digit R-1-r, the step counter at digit R, and pc+1 at
// digit R+1. R covers every register the program or its inputs touch. Storing
// pc+1 rather than pc keeps real blocks nonzero in their top field.
//
// The halting formula says: there is an h (with a base N bounded by h) whose
// block 0 is the initial configuration, in which every block with content
// above it steps to its successor block by one instruction of p, and whose
// top block is terminal with output digit y. Terminal blocks match no step
// disjunct, so a witness cannot continue past termination, and every digit of
// a witness is pinned by induction from block 0: the witness is exactly the
// run. N is existentially chosen, so register values, counters, and h itself
// are unbounded while the formula keeps a single unbounded quantifier.

namespace godel {

struct Sigma1Prov {
  Program prog;
  std::uint32_t arity = 0;
};

namespace sigma1_detail {

struct RunMemo {
  std::mutex mu;
  std::map<std::pair<std::vector<mpz_class>, mpz_class>,
           std::tuple<bool, mpz_class, mpz_class>>
      m;
};

inline std::tuple<bool, mpz_class, mpz_class> memo_run(
    const std::shared_ptr<RunMemo>& memo, const Program& p,
    const std::vector<mpz_class>& in, const EvalCaps& caps) {
  mpz_class fuel(static_cast<unsigned long>(caps.accel_fuel));
  auto key = std::make_pair(in, fuel);
  {
    std::lock_guard<std::mutex> lock(memo->mu);
    auto it = memo->m.find(key);
    if (it != memo->m.end()) return it->second;
  }
  RunResult r = run(p, in, fuel);
  auto val = std::make_tuple(r.halted, r.output, r.time);
  std::lock_guard<std::mutex> lock(memo->mu);
  memo->m[key] = val;
  return val;
}

// Formula factory for one program. Levels count binders below the matrix: at
// level dd, N = var(dd) and h = var(dd+1); a variable bound at level L is
// var(dd-L) at level dd >= L.
struct Builder {
  std::uint32_t R, w, size;
  const Program& p;

  Builder(const Program& prog, std::uint32_t arity) : p(prog) {
    std::uint32_t maxr = 0;
    for (const Instr& i : prog.ins)
      if (i.op != Op::Halt && i.reg > maxr) maxr = i.reg;
    R = maxr + 1;
    if (arity + 1 > R) R = arity + 1;
    w = R + 2;
    size = static_cast<std::uint32_t>(prog.ins.size());
  }

  static Term N_(std::uint32_t dd) { return var(dd); }
  static Term h_(std::uint32_t dd) { return var(dd + 1); }

  Term pow(std::uint32_t dd, std::uint32_t e) const {
    if (e == 0) return succ(zero());
    Term acc = N_(dd);
    for (std::uint32_t i = 1; i < e; i++) acc = mul(acc, N_(dd));
    return acc;
  }

  // t * N^e, dropping the factor when e = 0
  Term mulp(Term t, std::uint32_t dd, std::uint32_t e) const {
    return e == 0 ? t : mul(t, pow(dd, e));
  }

  static Term cf(std::uint64_t c, Term t) {
    return c == 1 ? t : mul(numeral(c), t);
  }

  static Formula ff() { return equal(zero(), succ(zero())); }

  // bounded quantifiers: bound built at the current level, body one deeper
  static Formula bex_le(Term bound, Formula body) {
    return exists(land(le(var(0), lift_free(bound)), body));
  }
  static Formula bex_lt(Term bound, Formula body) {
    return exists(land(lt(var(0), lift_free(bound)), body));
  }
  static Formula bfa_le(Term bound, Formula body) {
    return forall(implies(le(var(0), lift_free(bound)), body));
  }

  // P is a power of two: no factorization q*d = P with d odd and d >= 3.
  // Quantifying the cofactor q first lets bounded search derive d by exact
  // division, so a violation surfaces at q = P/d rather than after sweeping
  // to d itself.
  static Formula pow2(Term P) {
    Formula odd3 =
        bex_le(var(0), equal(add(add(var(0), var(0)),
                                 succ(succ(succ(zero())))),
                             var(1)));
    Formula bad = bex_le(
        P, bex_le(lift_free(P),
                  land(equal(mul(var(1), var(0)), lift_free(P, 2)), odd3)));
    return lnot(bad);
  }
  // P is a power of M = N^w: a power of two with M-1 | P-1. Binding the
  // divisor first pins d = M-1 by its equation, which then pins the quotient
  // q = (P-1)/d, so the divisibility test is constant-time under bounded
  // search. It runs before the power-of-two test: it is the cheaper filter,
  // and sweeps that must refute pow_m for a whole range lean on it.
  Formula pow_m(Term P, std::uint32_t dd) const {
    return land(
        bex_le(pow(dd, w),
               land(equal(succ(var(0)), pow(dd + 1, w)),
                    bex_le(lift_free(P),
                           equal(succ(mul(var(1), var(0))), lift_free(P, 2))))),
        pow2(P));
  }

  // block field tests; B is var(bix) at level dd

  // pc field of B equals the constant c: B = c*N^(w-1) + r, r < N^(w-1)
  Formula pc_is(std::uint32_t bix, std::uint64_t c, std::uint32_t dd) const {
    return bex_lt(pow(dd, w - 1),
                  equal(var(bix + 1), add(cf(c, pow(dd + 1, w - 1)), var(0))));
  }

  // pc field of B names an instruction or the fall-off point. A disjunction
  // over the finitely many codes keeps every branch constant-time and rejects
  // blocks whose pc field codes nothing.
  Formula pc_any(std::uint32_t bix, std::uint32_t dd) const {
    std::vector<Formula> opts;
    for (std::uint64_t c = 1; c <= static_cast<std::uint64_t>(size) + 1; c++)
      opts.push_back(pc_is(bix, c, dd));
    return fold_or(opts);
  }

  // Digit decompositions bind the remainder below the digit first (a small
  // sweep, under N^e), then the digit, leaving the part above the digit to be
  // forced by exact division.

  // digit e of B is zero: B = q*N^(e+1) + r, r < N^e
  Formula digit_zero(std::uint32_t bix, std::uint32_t e, std::uint32_t dd) const {
    return bex_lt(pow(dd, e),
                  bex_le(var(bix + 1),
                         equal(var(bix + 2),
                               add(mul(var(0), pow(dd + 2, e + 1)), var(1)))));
  }

  // digit e of B is at least one: B = q*N^(e+1) + (d+1)*N^e + r with d+2 <= N
  Formula digit_ge1(std::uint32_t bix, std::uint32_t e, std::uint32_t dd) const {
    return bex_lt(
        pow(dd, e),
        exists(land(
            le(succ(succ(var(0))), N_(dd + 2)),
            bex_le(var(bix + 2),
                   equal(var(bix + 3),
                         add(mul(var(0), pow(dd + 3, e + 1)),
                             add(mulp(succ(var(1)), dd + 3, e), var(2))))))));
  }

  // digit e of B is at most N-2 (room to increment without a carry)
  Formula digit_le_nm2(std::uint32_t bix, std::uint32_t e, std::uint32_t dd) const {
    return bex_lt(
        pow(dd, e),
        exists(land(
            le(succ(succ(var(0))), N_(dd + 2)),
            bex_le(var(bix + 2),
                   equal(var(bix + 3),
                         add(mul(var(0), pow(dd + 3, e + 1)),
                             add(mulp(var(1), dd + 3, e), var(2))))))));
  }

  // digit e of B equals the value of v (also pinning v < N)
  Formula digit_eq(std::uint32_t bix, std::uint32_t e, Term v,
                   std::uint32_t dd) const {
    return land(
        lt(v, N_(dd)),
        bex_lt(pow(dd, e),
               bex_le(var(bix + 1),
                      equal(var(bix + 2),
                            add(mul(var(0), pow(dd + 2, e + 1)),
                                add(mulp(lift_free(v, 2), dd + 2, e), var(1)))))));
  }

  // counter digit of B is at least t (plus1 credits the halt charge)
  Formula cnt_geq(std::uint32_t bix, const mpz_class& t, bool plus1,
                  std::uint32_t dd) const {
    Term d = var(0);
    return bex_lt(
        pow(dd, R),
        exists(land(
            lt(var(0), N_(dd + 2)),
            land(le(numeral(t), plus1 ? succ(d) : d),
                 bex_le(var(bix + 2),
                        equal(var(bix + 3),
                              add(mul(var(0), pow(dd + 3, R + 1)),
                                  add(mulp(var(1), dd + 3, R), var(2)))))))));
  }

  // block 0 is the initial configuration: h = a*M + sum of input fields plus
  // the pc field coding pc = 0
  Formula init_f(const std::vector<Term>& xs) const {
    Term sum = pow(1, w - 1);
    for (std::size_t i = 0; i < xs.size(); i++) {
      std::uint32_t e = R - 2 - static_cast<std::uint32_t>(i);
      sum = add(mulp(lift_free(xs[i]), 1, e), sum);
    }
    Formula f = bex_le(h_(0), equal(h_(1), add(mul(var(0), pow(1, w)), sum)));
    for (std::size_t i = xs.size(); i-- > 0;)
      f = land(lt(xs[i], N_(0)), f);
    return f;
  }

  // Every block with content above it steps by one instruction of p. The pair
  // of blocks at position P = M^i is carved out by a chain of remainder
  // equations, each forcing one value once the previous binder is fixed:
  //
  //   h = a*(P*M*M) + u,  u < P*M*M      (a: everything above the pair)
  //   u = c*P + b,        b < P          (b: everything below B)
  //   c = B'*M + B,       B < M          (the successor block and the block)
  Formula steps_f() const {
    std::vector<Formula> djs;
    for (std::uint32_t j = 0; j < size; j++) {
      const Instr& ins = p.ins[j];
      if (ins.op == Op::Halt) continue;
      std::uint32_t e = R - 1 - ins.reg;
      if (ins.op == Op::Inc) {
        djs.push_back(land(
            pc_is(0, j + 1, 7),
            land(digit_le_nm2(0, e, 7),
                 equal(add(var(0), add(pow(7, e), add(pow(7, R), pow(7, w - 1)))),
                       var(1)))));
      } else {
        std::uint32_t t = ins.target;
        djs.push_back(land(
            pc_is(0, j + 1, 7),
            land(digit_zero(0, e, 7),
                 equal(add(var(0), add(pow(7, R), cf(t + 1, pow(7, w - 1)))),
                       add(var(1), cf(j + 1, pow(7, w - 1)))))));
        djs.push_back(land(
            pc_is(0, j + 1, 7),
            land(digit_ge1(0, e, 7),
                 equal(add(var(0), add(pow(7, R), pow(7, w - 1))),
                       add(var(1), pow(7, e))))));
      }
    }
    Formula sd = djs.empty() ? ff() : fold_or(djs);
    // level 7: B=0, B'=1, b=2, c=3, u=4, a=5, P=6, N=7, h=8
    Formula x6 = land(equal(var(3), add(mul(var(1), pow(7, w)), var(0))),
                      land(digit_le_nm2(0, R, 7), sd));
    Formula x5 = bex_lt(pow(6, w), x6);
    Formula x4 = land(equal(var(2), add(mul(var(1), var(4)), var(0))),
                      bex_lt(pow(5, w), x5));
    Formula x3 = bex_lt(var(3), x4);
    Formula e1 = equal(var(4),
                       add(mul(var(1), mul(mul(var(2), pow(3, w)), pow(3, w))),
                           var(0)));
    Formula x2 = land(e1, bex_le(var(0), x3));
    Formula x1 = bex_lt(mul(mul(var(1), pow(2, w)), pow(2, w)), x2);
    Formula tb = bex_le(h_(1), x1);
    // The universal sweep over P visits every candidate up to h, so the
    // cheap range test P*M <= h has to come first: it kills all but the
    // O(h / M) block positions before the power-of-M test spends anything.
    Formula ante =
        land(le(mul(var(0), pow(1, w)), h_(1)), pow_m(var(0), 1));
    return bfa_le(h_(0), implies(ante, tb));
  }

  std::vector<std::uint64_t> terminal_pcs(bool halts_only) const {
    std::vector<std::uint64_t> cs;
    if (!halts_only) cs.push_back(static_cast<std::uint64_t>(size) + 1);
    for (std::uint32_t j = 0; j < size; j++)
      if (p.ins[j].op == Op::Halt) cs.push_back(j + 1);
    return cs;
  }

  // the top block (h = B*P + b forces everything above P to be zero)
  Formula top_block(Formula inner) const {
    Formula ob = bex_lt(pow(1, w), bex_lt(var(1), inner));
    return bex_le(h_(0), land(pow_m(var(0), 1), ob));
  }

  // top block is terminal and its output register digit equals y
  Formula last_f(Term y) const {
    Formula deco = equal(var(4), add(mul(var(1), var(2)), var(0)));
    std::vector<Formula> tpc;
    for (std::uint64_t c : terminal_pcs(false)) tpc.push_back(pc_is(1, c, 3));
    Formula inner =
        land(deco, land(fold_or(tpc), digit_eq(1, R - 1, lift_free(y, 3), 3)));
    return top_block(inner);
  }

  // top block witnesses at least t charged steps: its counter reaches t, or it
  // sits on a halt instruction whose own charge closes the gap
  Formula runtime_top_f(const mpz_class& t) const {
    Formula deco = equal(var(4), add(mul(var(1), var(2)), var(0)));
    Formula disj = cnt_geq(1, t, false, 3);
    std::vector<Formula> hpc;
    for (std::uint64_t c : terminal_pcs(true)) hpc.push_back(pc_is(1, c, 3));
    if (!hpc.empty())
      disj = lor(disj, land(fold_or(hpc), cnt_geq(1, t, true, 3)));
    Formula inner = land(deco, land(pc_any(1, 3), disj));
    return top_block(inner);
  }

  // matrix over free N = 0, h = 1; remaining frees shift up by two
  Formula matrix(const std::vector<Term>& xs, Formula final_clause) const {
    return fold_and({le(N_(0), h_(0)), le(numeral(std::uint64_t(2)), N_(0)),
                     init_f(xs), pow2(N_(0)), final_clause, steps_f()});
  }
};

struct ProvRegistry {
  static ProvRegistry& inst() {
    static ProvRegistry* r = new ProvRegistry;
    return *r;
  }
  std::mutex mu;
  std::map<const Node*, Sigma1Prov> map;
};

inline void record_prov(const Node* n, const Program& p, std::uint32_t arity) {
  auto& r = ProvRegistry::inst();
  std::lock_guard<std::mutex> lock(r.mu);
  r.map.emplace(n, Sigma1Prov{p, arity});
}

}  // namespace sigma1_detail

inline const Sigma1Prov* sigma1_provenance(Formula f) {
  auto& r = sigma1_detail::ProvRegistry::inst();
  std::lock_guard<std::mutex> lock(r.mu);
  auto it = r.map.find(f);
  return it == r.map.end() ? nullptr : &it->second;
}

// The matrix of the halting formula with N and h free (free 0 and 1), the
// output y at free 2 and input x_i at free 2+i: exact ground truth for any
// concrete history, evaluable without any unbounded search.
inline Formula sigma1_history_matrix(const Program& p, std::uint32_t arity) {
  validate(p);
  sigma1_detail::Builder b(p, arity);
  std::vector<Term> xs;
  for (std::uint32_t i = 0; i < arity; i++) xs.push_back(var(3 + i));
  return b.matrix(xs, b.last_f(var(2)));
}

// H_p(x_1..x_k, y): free 0 is the output y, free i is the input x_i. True in
// the standard model exactly when p on (x_1..x_k) halts with output y. The
// formula is registered as functional in y, so accelerated evaluation decides
// instances by running p.
inline Formula compile_to_sigma1(const Program& p, std::uint32_t arity) {
  validate(p);
  static std::mutex mu;
  static std::map<std::string, Formula>* cache = new std::map<std::string, Formula>;
  std::string key = program_bytes(p);
  key += ':';
  key += std::to_string(arity);
  {
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache->find(key);
    if (it != cache->end()) return it->second;
  }
  Formula H = exists(exists(sigma1_history_matrix(p, arity)));
  auto memo = std::make_shared<sigma1_detail::RunMemo>();
  auto prog = std::make_shared<Program>(p);
  std::uint32_t k = arity;
  register_witness(H, [memo, prog, k](const AccelResolver& res,
                                      const EvalCaps& caps)
                          -> std::optional<mpz_class> {
    std::vector<mpz_class> in(k);
    for (std::uint32_t i = 0; i < k; i++) {
      auto v = res(i + 1);
      if (!v) return std::nullopt;
      in[i] = *v;
    }
    auto [halted, out, time] = sigma1_detail::memo_run(memo, *prog, in, caps);
    (void)time;
    if (!halted) return std::nullopt;
    return out;
  });
  sigma1_detail::record_prov(H, p, arity);
  std::lock_guard<std::mutex> lock(mu);
  (*cache)[key] = H;
  return H;
}

// ∃y H_p(n_1..n_k, y): p halts on the given inputs.
inline Formula halting_sentence(const Program& p,
                                const std::vector<mpz_class>& inputs) {
  Formula H = compile_to_sigma1(p, static_cast<std::uint32_t>(inputs.size()));
  Formula inst = H;
  for (std::size_t i = 0; i < inputs.size(); i++)
    inst = substitute(inst, static_cast<std::uint32_t>(i) + 1, numeral(inputs[i]));
  auto memo = std::make_shared<sigma1_detail::RunMemo>();
  auto prog = std::make_shared<Program>(p);
  std::vector<mpz_class> in = inputs;
  if (!inputs.empty()) {
    register_witness(inst, [memo, prog, in](const AccelResolver&,
                                            const EvalCaps& caps)
                               -> std::optional<mpz_class> {
      auto [halted, out, time] = sigma1_detail::memo_run(memo, *prog, in, caps);
      (void)time;
      if (!halted) return std::nullopt;
      return out;
    });
  }
  Formula s = exists(inst);
  register_accel(s, [memo, prog, in](const AccelResolver&, const EvalCaps& caps) {
    auto [halted, out, time] = sigma1_detail::memo_run(memo, *prog, in, caps);
    (void)out;
    (void)time;
    return halted ? Verdict::True : Verdict::Unknown;
  });
  sigma1_detail::record_prov(s, p, static_cast<std::uint32_t>(inputs.size()));
  return s;
}

// Runtime matrix with N and h free: the top block of the (possibly partial)
// history witnesses t charged steps.
inline Formula sigma1_runtime_matrix(const Program& p,
                                     const std::vector<mpz_class>& inputs,
                                     const mpz_class& t) {
  validate(p);
  sigma1_detail::Builder b(p, static_cast<std::uint32_t>(inputs.size()));
  std::vector<Term> xs;
  for (const mpz_class& v : inputs) xs.push_back(numeral(v));
  return b.matrix(xs, b.runtime_top_f(t));
}

// Holds in the standard model exactly when t <= the running time of p on the
// given inputs (every t when p diverges). Counters witness executed steps and
// a halt-terminal top block credits the halt charge itself.
inline Formula runtime_at_least(const Program& p,
                                const std::vector<mpz_class>& inputs,
                                const mpz_class& t) {
  Formula s = exists(exists(sigma1_runtime_matrix(p, inputs, t)));
  auto memo = std::make_shared<sigma1_detail::RunMemo>();
  auto prog = std::make_shared<Program>(p);
  std::vector<mpz_class> in = inputs;
  mpz_class tt = t;
  register_accel(s, [memo, prog, in, tt](const AccelResolver&,
                                         const EvalCaps& caps) {
    auto [halted, out, time] = sigma1_detail::memo_run(memo, *prog, in, caps);
    (void)out;
    if (halted) return tt <= time ? Verdict::True : Verdict::False;
    return tt <= time + 1 ? Verdict::True : Verdict::Unknown;
  });
  sigma1_detail::record_prov(s, p, static_cast<std::uint32_t>(inputs.size()));
  return s;
}

}  // namespace godel
