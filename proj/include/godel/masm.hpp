#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <gmpxx.h>

#include "godel/machine.hpp"

// Structured assembly over the inc/decjz/halt machine. Every primitive has a
// closed-form step count, documented beside its emitter; routine builders use
// those to price whole runs exactly without stepping the machine.
//
// Conventions: one register stays zero forever so `jmp` is a decjz on it;
// scratch registers must be zero at entry and are zero again at exit unless a
// primitive says otherwise.

namespace godel {
namespace masm {

struct Label {
  std::size_t id;
};

class Asm {
 public:
  explicit Asm(std::uint32_t inputs) : next_reg_(inputs + 1) { z_ = fresh(); }

  std::uint32_t fresh() { return next_reg_++; }
  std::uint32_t zreg() const { return z_; }
  std::uint32_t reg_count() const { return next_reg_; }

  Label label() {
    targets_.push_back(SIZE_MAX);
    return {targets_.size() - 1};
  }

  void bind(Label l) {
    if (targets_[l.id] != SIZE_MAX) throw std::logic_error("label bound twice");
    targets_[l.id] = ins_.size();
  }

  std::size_t here() const { return ins_.size(); }

  void inc(std::uint32_t r) { ins_.push_back(godel::inc(r)); }

  void decjz(std::uint32_t r, Label l) {
    fixups_.push_back({ins_.size(), l.id});
    ins_.push_back(godel::decjz(r, 0));
  }

  void halt() { ins_.push_back(godel::halt()); }

  // cost 1
  void jmp(Label l) { decjz(z_, l); }

  // jump if r == 0 (r preserved): cost 1 if zero, 2 otherwise
  void jz(std::uint32_t r, Label l) {
    decjz(r, l);
    inc(r);
  }

  // cost k
  void add_const(std::uint32_t r, std::uint64_t k) {
    for (std::uint64_t i = 0; i < k; i++) inc(r);
  }

  // dst += src, src = 0: cost 3*src + 1
  void mv(std::uint32_t src, std::uint32_t dst) {
    Label top = label(), out = label();
    bind(top);
    decjz(src, out);
    inc(dst);
    jmp(top);
    bind(out);
  }

  // r = 0: cost 2*r + 1
  void zero(std::uint32_t r) {
    Label top = label(), out = label();
    bind(top);
    decjz(r, out);
    jmp(top);
    bind(out);
  }

  // dst += src, src preserved, tmp scratch: cost 7*src + 2
  void cp(std::uint32_t src, std::uint32_t dst, std::uint32_t tmp) {
    Label top = label(), out = label();
    bind(top);
    decjz(src, out);
    inc(dst);
    inc(tmp);
    jmp(top);
    bind(out);
    mv(tmp, src);
  }

  // r *= 2, tmp scratch: cost 7*r + 2 (on the value before doubling)
  void dbl(std::uint32_t r, std::uint32_t tmp) {
    mv(r, tmp);
    Label top = label(), out = label();
    bind(top);
    decjz(tmp, out);
    inc(r);
    inc(r);
    jmp(top);
    bind(out);
  }

  // v = floor(v/2), b += v mod 2 (b normally zero at entry), q scratch:
  // cost 7*floor(v/2) + 2*(v mod 2) + 2
  void halve(std::uint32_t v, std::uint32_t b, std::uint32_t q) {
    Label top = label(), odd = label(), done = label();
    bind(top);
    decjz(v, done);
    decjz(v, odd);
    inc(q);
    jmp(top);
    bind(odd);
    inc(b);
    bind(done);
    mv(q, v);
  }

  // v >>= 8, m = low byte (m zero at entry), b and q scratch:
  // cost 7*sum_{k=1..8} floor(v/2^k) + 2*popcount(v mod 256) + (v mod 256) + 24
  void divmod256(std::uint32_t v, std::uint32_t m, std::uint32_t b, std::uint32_t q) {
    for (int i = 0; i < 8; i++) {
      halve(v, b, q);
      Label skip = label();
      decjz(b, skip);
      add_const(m, 1u << i);
      bind(skip);
    }
  }

  // v >>= 7, g = v mod 128 (g zero at entry), b and q scratch:
  // cost 7*sum_{k=1..7} floor(v/2^k) + 2*popcount(v mod 128) + (v mod 128) + 21
  void divmod128(std::uint32_t v, std::uint32_t g, std::uint32_t b, std::uint32_t q) {
    for (int i = 0; i < 7; i++) {
      halve(v, b, q);
      Label skip = label();
      decjz(b, skip);
      add_const(g, 1u << i);
      bind(skip);
    }
  }

  // acc = 256*acc + m, m = 0, t scratch: cost 1785*acc + 3*m + 17
  void append_byte(std::uint32_t acc, std::uint32_t m, std::uint32_t t) {
    for (int i = 0; i < 8; i++) dbl(acc, t);
    mv(m, acc);
  }

  // r += k by doubling, r zero at entry, t scratch:
  // cost 7*(k - popcount(k)) + 2*nbits(k) + popcount(k), and 0 when k == 0
  void load_const(std::uint32_t r, const mpz_class& k, std::uint32_t t) {
    if (k == 0) return;
    if (k < 0) throw std::logic_error("load_const: negative");
    std::size_t bits = mpz_sizeinbase(k.get_mpz_t(), 2);
    for (std::size_t i = bits; i-- > 0;) {
      dbl(r, t);
      if (mpz_tstbit(k.get_mpz_t(), i)) inc(r);
    }
  }

  // jump to hit if t == k, t consumed either way:
  // cost t+1 if t<k; k+1 if t==k; k+2 if t>k (falls through with t -= k+1)
  void case_eq(std::uint32_t t, std::uint64_t k, Label hit, Label miss) {
    for (std::uint64_t i = 0; i < k; i++) decjz(t, miss);
    decjz(t, hit);
    jmp(miss);
  }

  Program take() {
    for (auto& [pos, lid] : fixups_) {
      if (targets_[lid] == SIZE_MAX) throw std::logic_error("unbound label");
      if (targets_[lid] > ins_.size()) throw std::logic_error("label out of range");
      ins_[pos].target = static_cast<std::uint32_t>(targets_[lid]);
    }
    Program p{ins_};
    validate(p);
    return p;
  }

 private:
  std::vector<Instr> ins_;
  std::vector<std::size_t> targets_;
  std::vector<std::pair<std::size_t, std::size_t>> fixups_;
  std::uint32_t next_reg_;
  std::uint32_t z_;
};

// Closed forms matching the emitters above, on exact values.

inline mpz_class cost_mv(const mpz_class& s) { return 3 * s + 1; }
inline mpz_class cost_zero(const mpz_class& r) { return 2 * r + 1; }
inline mpz_class cost_cp(const mpz_class& s) { return 7 * s + 2; }
inline mpz_class cost_dbl(const mpz_class& r) { return 7 * r + 2; }

inline mpz_class cost_halve(const mpz_class& v) {
  return 7 * (v / 2) + 2 * (v % 2) + 2;
}

inline mpz_class cost_divmod256(const mpz_class& v) {
  mpz_class s = 0, w = v / 2;
  for (int i = 0; i < 8; i++) {
    s += w;
    w /= 2;
  }
  unsigned long m = mpz_class(v % 256).get_ui();
  return 7 * s + 2 * mpz_popcount(mpz_class(m).get_mpz_t()) + m + 24;
}

inline mpz_class cost_divmod128(const mpz_class& v) {
  mpz_class s = 0, w = v / 2;
  for (int i = 0; i < 7; i++) {
    s += w;
    w /= 2;
  }
  unsigned long g = mpz_class(v % 128).get_ui();
  return 7 * s + 2 * mpz_popcount(mpz_class(g).get_mpz_t()) + g + 21;
}

inline mpz_class cost_append_byte(const mpz_class& acc, const mpz_class& m) {
  return 1785 * acc + 3 * m + 17;
}

inline mpz_class cost_load_const(const mpz_class& k) {
  if (k == 0) return 0;
  mpz_class pop = mpz_popcount(k.get_mpz_t());
  mpz_class bits = mpz_sizeinbase(k.get_mpz_t(), 2);
  return 7 * (k - pop) + 2 * bits + pop;
}

inline mpz_class cost_case_eq(const mpz_class& t, std::uint64_t k) {
  if (t < k) return t + 1;
  if (t == k) return mpz_class(k + 1);
  return mpz_class(k + 2);
}

// A program plus an optional whole-run shortcut that reproduces run() exactly
// (same halting verdict, output, and step count). On OutOfFuel the shortcut
// reports time == fuel but only an entry-state configuration.
struct MachineHandle {
  Program prog;
  std::function<std::optional<RunResult>(const std::vector<mpz_class>&, const mpz_class&)> fast;
};

inline RunResult run_handle(const MachineHandle& h, const std::vector<mpz_class>& inputs,
                            const mpz_class& fuel, bool use_fast = true) {
  if (use_fast && h.fast) {
    if (auto r = h.fast(inputs, fuel)) return *r;
  }
  return run(h.prog, inputs, fuel);
}

}  // namespace masm
}  // namespace godel
