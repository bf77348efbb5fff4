#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <gmpxx.h>

#include "machine.hpp"
#include "masm.hpp"

// Self-referential programs by the classical recursion-theorem construction.
//
// selfref_build(t) wraps a template t into a program e = A ++ B ++ t' where
//   A   loads a seed y (the records of B ++ t') bit by bit,
//   B   re-synthesizes A's own records from y, assembles the full coding
//       bytes of e into one register, and hands the template
//       r1 = code(e), r2 = x (the original input), every scratch zeroed,
//   t'  is t relocated past the prologue.
//
// Exactly: run(e, [x], fuel) behaves as run(t, [code(e), x], fuel - pro(x))
// with pro(x) = pro_cost_base + 3*x, so equal outputs, equal halting, and
// configurations that agree on every register with pc shifted by pro_end.
//
// A consists of one 5-instruction block per bit of y (msb first), doubling an
// accumulator that alternates between two registers:
//   5j+0  DECJZ src  -> 5j+4      drain loop: dst += 2 per unit of src
//   5j+1  INC   dst
//   5j+2  INC   dst
//   5j+3  DECJZ z    -> 5j+0
//   5j+4  INC   dst|junk          the bit itself
// Block j reads the value left by block j-1, so src/dst swap by parity and
// the final accumulator register depends on the parity of bitlen(y).
//
// B never needs loop counters: the bit reversal seeds a sentinel 1 below the
// reversed bits, so every pop loop terminates when its source register runs
// out. The synthesis loop walks y's bits msb first and emits the record bytes
// of the corresponding A block (two jump targets are kept as running
// counters, everything else is a literal), then appends y's own bytes. The
// byte appends run through one APPEND subroutine and a return-dispatch chain,
// the jump-target varints through one VARE subroutine.
//
// The prologue's exact step count is computed at build time by replaying
// every phase against the masm cost contracts; the sums over the giant code
// accumulator collapse by sum_{i>=1} floor(V/b^i) = (V - digitsum_b(V))/(b-1).
// selfref_run uses it as a mirror: out-of-fuel inside the prologue reports
// the entry configuration with time == fuel (same convention as
// machlib::sub_mirror), otherwise the template tail runs on the interpreter
// from the handoff configuration.

namespace godel::selfref {

struct SelfRef {
  Program prog;             // e
  mpz_class code;           // program_code(prog)
  std::uint32_t pro_end = 0;  // first template pc; also a_len + b_len
  mpz_class pro_cost_base;  // prologue steps on input 0; exact is base + 3x
  std::uint32_t base = 0;   // z register; scratch band is base..base+18
  std::uint32_t a_len = 0;  // loader instructions
  std::uint32_t b_len = 0;  // builder instructions
  mpz_class y;              // seed: records of builder ++ template as a value
};

namespace detail {

struct Regs {
  std::uint32_t z, rX, rY, rjunk, racc2, yA, yD, ca, cd, mreg, work, g, bb, qq, tt, pf, bitr, retA,
      retV;
};

inline Regs make_regs(std::uint32_t base) {
  Regs r;
  r.z = base;
  r.rX = base + 1;
  r.rY = base + 2;
  r.rjunk = base + 3;
  r.racc2 = base + 4;
  r.yA = base + 5;
  r.yD = base + 6;
  r.ca = base + 7;
  r.cd = base + 8;
  r.mreg = base + 9;
  r.work = base + 10;
  r.g = base + 11;
  r.bb = base + 12;
  r.qq = base + 13;
  r.tt = base + 14;
  r.pf = base + 15;
  r.bitr = base + 16;
  r.retA = base + 17;
  r.retV = base + 18;
  return r;
}

// One literal byte fed to APPEND and the call site it goes through.
struct LitByte {
  unsigned char b;
  int site;
};

// Emission path through the block emitter for one parity.
struct Section {
  std::vector<LitByte> pre;   // 02 v(src)        then varint(cd)
  std::vector<LitByte> mid;   // 01 v(dst) 01 v(dst) 02 v(z)   then varint(ca)
  std::vector<LitByte> post;  // 01
  std::vector<LitByte> x1;    // v(dst)   bit = 1
  std::vector<LitByte> x0;    // v(junk)  bit = 0
  int site_cd = 0;            // retV sites of the two varint calls
  int site_ca = 0;
};

struct BScript {
  Section even, odd;           // even serves blocks j % 2 == 0 (src = rY, dst = rX)
  std::vector<LitByte> hdr;    // varint(N) bytes, appended after the 0x02 seed
  int site_vare_cont = 0;      // APPEND sites used inside VARE
  int site_vare_last = 0;
};

inline Program relocate(const Program& p, std::uint32_t off) {
  Program q = p;
  for (Instr& i : q.ins)
    if (i.op == Op::DecJz) i.target += off;
  return q;
}

inline Bytes records_of(const std::vector<Instr>& ins) {
  Bytes out;
  for (const Instr& i : ins) {
    out.push_back(static_cast<char>(i.op));
    if (i.op == Op::Inc) {
      put_varint(out, i.reg);
    } else if (i.op == Op::DecJz) {
      put_varint(out, i.reg);
      put_varint(out, i.target);
    }
  }
  return out;
}

inline int byte_pop(unsigned char b) {
  int n = 0;
  for (int i = 0; i < 8; i++) n += (b >> i) & 1;
  return n;
}

inline mpz_class byte_digit_sum(const mpz_class& v) {
  Bytes b = value_to_bytes(v);
  unsigned long s = 0;
  for (unsigned char c : b) s += c;
  return mpz_class(s);
}

// Builder program. All registers explicit; hdr_bytes is the varint of the
// final instruction count, odd_t picks which accumulator register holds y
// after the loader.
inline Program emit_b(const Regs& R, const Bytes& hdr_bytes, bool odd_t, BScript& S) {
  masm::Asm a(R.z == 0 ? 0 : R.z - 1);
  if (a.zreg() != R.z) throw std::logic_error("selfref: zreg mismatch");
  S = BScript{};

  masm::Label L_append = a.label(), L_vare = a.label(), L_eb = a.label(), L_eb_tail = a.label();
  masm::Label L_s_ret = a.label(), L_out = a.label();
  std::vector<masm::Label> app_rets, vare_rets;

  auto call_append = [&]() -> int {
    int site = static_cast<int>(app_rets.size()) + 1;
    if (site > 1) a.load_const(R.retA, site - 1, R.tt);
    a.jmp(L_append);
    app_rets.push_back(a.label());
    a.bind(app_rets.back());
    return site;
  };
  auto emit_lit = [&](unsigned char b, std::vector<LitByte>* rec) {
    a.load_const(R.mreg, b, R.tt);
    int site = call_append();
    if (rec) rec->push_back({b, site});
  };
  auto emit_varcall = [&](std::uint32_t counter, int* retv_site) {
    a.cp(counter, R.work, R.tt);
    int site = static_cast<int>(vare_rets.size()) + 1;
    *retv_site = site;
    if (site > 1) a.load_const(R.retV, site - 1, R.tt);
    a.jmp(L_vare);
    vare_rets.push_back(a.label());
    a.bind(vare_rets.back());
  };

  // ---- SETUP: reversal sentinels, cd = 4 ----
  a.inc(R.yA);
  a.inc(R.yD);
  a.add_const(R.cd, 4);

  // ---- HDR: racc2 = value(0x02 ++ varint(N)) ----
  a.add_const(R.racc2, 2);
  for (unsigned char hb : hdr_bytes) {
    for (int i = 7; i >= 0; i--) {  // fixed-shape byte load: 64 instructions
      a.dbl(R.mreg, R.tt);
      if ((hb >> i) & 1) a.inc(R.mreg);
    }
    for (int k = byte_pop(hb); k < 8; k++) a.inc(R.rjunk);
    int site = call_append();
    S.hdr.push_back({hb, site});
  }

  // ---- REV2: pop y lsb first, push into yA and yD ----
  std::uint32_t fin = odd_t ? R.rX : R.rY;
  {
    masm::Label top = a.label(), done = a.label(), sk = a.label();
    a.bind(top);
    a.jz(fin, done);
    a.halve(fin, R.bb, R.qq);
    a.dbl(R.yA, R.tt);
    a.dbl(R.yD, R.tt);
    a.decjz(R.bb, sk);
    a.inc(R.yA);
    a.inc(R.yD);
    a.bind(sk);
    a.jmp(top);
    a.bind(done);
  }

  // ---- SYN: pop yA msb first, emit one loader block per bit ----
  {
    masm::Label top = a.label(), sent = a.label(), b0 = a.label(), go = a.label();
    a.bind(top);
    a.halve(R.yA, R.bb, R.qq);
    a.jz(R.yA, sent);
    a.decjz(R.bb, b0);
    a.inc(R.bitr);
    a.bind(b0);
    a.jmp(L_eb);
    a.bind(L_s_ret);
    a.jmp(top);
    a.bind(sent);
    a.decjz(R.bb, go);  // discard the sentinel bit
    a.bind(go);
  }

  // ---- TAIL: racc2 <<= 8n (7 pad doublings + t bit appends), += y ----
  for (int i = 0; i < 7; i++) a.dbl(R.racc2, R.tt);
  {
    masm::Label top = a.label(), sent = a.label(), sk = a.label(), go = a.label();
    a.bind(top);
    a.halve(R.yD, R.bb, R.qq);
    a.jz(R.yD, sent);
    a.dbl(R.racc2, R.tt);
    a.decjz(R.bb, sk);
    a.inc(R.racc2);
    a.bind(sk);
    a.jmp(top);
    a.bind(sent);
    a.decjz(R.bb, go);
    a.bind(go);
  }

  // ---- G: interface handoff, scratch cleanup ----
  a.mv(1, 2);
  a.mv(R.racc2, 1);
  a.zero(R.rjunk);
  a.zero(R.ca);
  a.zero(R.cd);
  a.zero(R.pf);
  a.jmp(L_out);

  // ---- EB: emit the record bytes of one loader block ----
  {
    a.bind(L_eb);
    masm::Label L_even = a.label();
    a.decjz(R.pf, L_even);  // pf == 1: odd section (and pf is now 0 again)

    auto section = [&](bool even_par, Section& sec) {
      std::uint32_t src = even_par ? R.rY : R.rX;
      std::uint32_t dst = even_par ? R.rX : R.rY;
      Bytes pre;
      pre.push_back(2);
      put_varint(pre, src);
      for (unsigned char b : pre) emit_lit(b, &sec.pre);
      emit_varcall(R.cd, &sec.site_cd);
      Bytes mid;
      mid.push_back(1);
      put_varint(mid, dst);
      mid.push_back(1);
      put_varint(mid, dst);
      mid.push_back(2);
      put_varint(mid, R.z);
      for (unsigned char b : mid) emit_lit(b, &sec.mid);
      emit_varcall(R.ca, &sec.site_ca);
      emit_lit(1, &sec.post);
      masm::Label x0 = a.label(), xj = a.label();
      a.decjz(R.bitr, x0);
      Bytes bx1;
      put_varint(bx1, dst);
      for (unsigned char b : bx1) emit_lit(b, &sec.x1);
      a.jmp(xj);
      a.bind(x0);
      Bytes bx0;
      put_varint(bx0, R.rjunk);
      for (unsigned char b : bx0) emit_lit(b, &sec.x0);
      a.bind(xj);
    };

    section(false, S.odd);
    a.jmp(L_eb_tail);
    a.bind(L_even);
    section(true, S.even);
    a.inc(R.pf);  // toggle 0 -> 1
    a.bind(L_eb_tail);
    a.add_const(R.ca, 5);
    a.add_const(R.cd, 5);
    a.jmp(L_s_ret);
  }

  // ---- VARE: canonical varint of work, low group first ----
  {
    a.bind(L_vare);
    masm::Label top = a.label(), last = a.label();
    a.bind(top);
    for (int i = 0; i < 7; i++) {
      a.halve(R.work, R.bb, R.qq);
      masm::Label sk = a.label();
      a.decjz(R.bb, sk);
      a.add_const(R.g, 1u << i);
      a.bind(sk);
    }
    a.jz(R.work, last);
    a.inc(R.bb);  // continuation bit: g += 128
    for (int i = 0; i < 7; i++) a.dbl(R.bb, R.tt);
    a.mv(R.bb, R.g);
    a.mv(R.g, R.mreg);
    S.site_vare_cont = call_append();
    a.jmp(top);
    a.bind(last);
    a.mv(R.g, R.mreg);
    S.site_vare_last = call_append();
    for (auto& l : vare_rets) a.decjz(R.retV, l);
    a.halt();  // unreachable
  }

  // ---- APPEND: racc2 = 256*racc2 + mreg ----
  {
    a.bind(L_append);
    a.append_byte(R.racc2, R.mreg, R.tt);
    for (auto& l : app_rets) a.decjz(R.retA, l);
    a.halt();  // unreachable
  }

  a.bind(L_out);
  return a.take();
}

// ---- exact replay ----
//
// The per-bit emitter costs stay word sized (the largest term is the varint
// call on a counter bounded by 5t), so the inner loop runs on plain integers
// and only the telescoped sums touch big values.

inline unsigned long long lc64(std::uint64_t k) {
  if (k == 0) return 0;
  unsigned long long p = static_cast<unsigned long long>(__builtin_popcountll(k));
  unsigned long long nbits = 64 - static_cast<unsigned long long>(__builtin_clzll(k));
  return 7 * (k - p) + 2 * nbits + p;
}

// One literal byte through APPEND, minus the telescoped 1785*acc part.
inline unsigned long long lit_cost64(const LitByte& l) {
  unsigned long long site = static_cast<unsigned long long>(l.site);
  return lc64(l.b) + (site > 1 ? lc64(site - 1) : 0) + 1 + 3ull * l.b + 17 + site;
}

// VARE on value v: cost minus telescoped append parts, plus emitted bytes.
inline unsigned long long vare_cost64(std::uint64_t v, const BScript& S, Bytes* out) {
  unsigned long long c = 0;
  for (;;) {
    std::uint64_t g = 0;
    for (int i = 0; i < 7; i++) {
      c += 7 * (v >> 1) + 2 * (v & 1) + 2;  // halve
      c += (v & 1) ? 1ull + (1ull << i) : 1ull;
      g |= (v & 1) << i;
      v >>= 1;
    }
    bool more = v > 0;
    c += more ? 2 : 1;  // jz(work)
    std::uint64_t byte = g | (more ? 128u : 0u);
    if (more) c += 1 + 903 + 385;  // inc bb; 7 doublings of bb; mv(bb, g)
    c += 3 * byte + 1;             // mv(g, mreg)
    unsigned long long site =
        static_cast<unsigned long long>(more ? S.site_vare_cont : S.site_vare_last);
    if (site > 1) c += lc64(site - 1);
    c += 1;              // jmp APPEND
    c += 3 * byte + 17;  // append residual
    c += site;           // dispatch walk
    if (out) out->push_back(static_cast<char>(byte));
    if (!more) break;
    c += 1;  // jmp back to the group loop
  }
  return c;
}

inline unsigned long long varcall_cost64(std::uint64_t counter, int retv_site, const BScript& S,
                                         Bytes* out) {
  unsigned long long site = static_cast<unsigned long long>(retv_site);
  unsigned long long c = 7 * counter + 2;  // cp into work
  if (site > 1) c += lc64(site - 1);
  c += 1;  // jmp VARE
  c += vare_cost64(counter, S, out);
  c += site;  // retV dispatch walk
  return c;
}

// Per-parity constants of one emitter pass: literal bytes and all glue that
// does not depend on the block index.
struct SecPlan {
  unsigned long long fixed = 0;  // lits + jz/jmp/dispatch glue, both branches share
  unsigned long long x1 = 0;     // extra when the bit is one
  unsigned long long x0 = 0;     // extra when the bit is zero
  Bytes pre, mid, post, bx1, bx0;
};

inline SecPlan make_sec_plan(const Section& sec) {
  SecPlan p;
  // shared glue: jz(yA) 2, jmp EB 1, decjz pf 1, decjz bitr 1, tail-in 1,
  // counters 10, jmp s_ret 1, jmp s_top 1
  p.fixed = 18;
  for (const LitByte& l : sec.pre) {
    p.fixed += lit_cost64(l);
    p.pre.push_back(static_cast<char>(l.b));
  }
  for (const LitByte& l : sec.mid) {
    p.fixed += lit_cost64(l);
    p.mid.push_back(static_cast<char>(l.b));
  }
  for (const LitByte& l : sec.post) {
    p.fixed += lit_cost64(l);
    p.post.push_back(static_cast<char>(l.b));
  }
  p.x1 = 2 + 1;  // bit routing with inc bitr; jmp over the zero branch
  for (const LitByte& l : sec.x1) {
    p.x1 += lit_cost64(l);
    p.bx1.push_back(static_cast<char>(l.b));
  }
  p.x0 = 1;  // bit routing jump
  for (const LitByte& l : sec.x0) {
    p.x0 += lit_cost64(l);
    p.bx0.push_back(static_cast<char>(l.b));
  }
  return p;
}

struct Replay {
  mpz_class cost_base;  // prologue steps on x = 0
  Bytes regen;          // independently synthesized program bytes of e
};

// Replays the whole prologue. y is the seed, n its byte length, code the
// final assembled value, v_syn the assembled value before the tail.
inline Replay replay(const BScript& S, const mpz_class& y, std::size_t n, std::uint64_t t,
                     const mpz_class& code, const mpz_class& v_syn) {
  Replay out;
  mpz_class c = 0;
  mpz_class T(static_cast<unsigned long>(t));
  mpz_class pop(static_cast<unsigned long>(mpz_popcount(y.get_mpz_t())));
  // final value of the reversal registers: 2^t plus y bit-reversed
  mpz_class u0 = 0;
  for (std::uint64_t k = 0; k < t; k++)
    if (mpz_tstbit(y.get_mpz_t(), static_cast<mp_bitcnt_t>(k)))
      mpz_setbit(u0.get_mpz_t(), static_cast<mp_bitcnt_t>(t - 1 - k));
  mpz_setbit(u0.get_mpz_t(), static_cast<mp_bitcnt_t>(t));
  mpz_class popu = pop + 1;
  // sum of floor(v/2^k), k >= 1, is v - popcount(v); the halve/double chains
  // below all telescope through it
  mpz_class leg_y = y - pop;
  mpz_class leg_u = u0 - popu;

  // loader: blocks cost 4*acc + 2, acc values sum to y - popcount(y)
  c += 4 * leg_y + 2 * T;

  // SETUP
  c += 2 + 4;

  // HDR
  out.regen.push_back(kPrefixProgram);
  c += 2;  // add_const(racc2, 2)
  for (const LitByte& l : S.hdr) {
    unsigned long long hc = 0;
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; i--) {
      hc += 7 * v + 2;  // dbl
      v *= 2;
      if ((l.b >> i) & 1) {
        hc += 1;
        v += 1;
      }
    }
    hc += 8 - static_cast<unsigned>(byte_pop(l.b));  // junk pads
    unsigned long long site = static_cast<unsigned long long>(l.site);
    if (site > 1) hc += lc64(site - 1);
    hc += 1 + 3ull * l.b + 17 + site;
    c += mpz_class(static_cast<unsigned long>(hc));
    out.regen.push_back(static_cast<char>(l.b));
  }

  // REV2: halves telescope over y, the two doublings over u0
  c += 2 * T;                      // jz per iteration
  c += 7 * leg_y + 2 * pop + 2 * T;  // halve(fin)
  c += 14 * leg_u + 4 * T;           // dbl(yA), dbl(yD)
  c += T + 2 * pop;                  // bit branch
  c += T;                            // jmp
  c += 1;                            // exit jz

  // SYN: halves telescope over u0; the emitter glue stays word sized and is
  // replayed bit by bit
  c += 7 * leg_u + 2 * (popu - 1) + 2 * T;
  {
    SecPlan even = make_sec_plan(S.even), odd = make_sec_plan(S.odd);
    unsigned long long small = 0;
    std::uint64_t ca = 0, cd = 4;
    for (std::uint64_t j = 0; j < t; j++) {
      bool bit = mpz_tstbit(y.get_mpz_t(), static_cast<mp_bitcnt_t>(t - 1 - j));
      const Section& sec = (j % 2 == 0) ? S.even : S.odd;
      const SecPlan& p = (j % 2 == 0) ? even : odd;
      small += p.fixed + (bit ? p.x1 : p.x0);
      out.regen += p.pre;
      small += varcall_cost64(cd, sec.site_cd, S, &out.regen);
      out.regen += p.mid;
      small += varcall_cost64(ca, sec.site_ca, S, &out.regen);
      out.regen += p.post;
      out.regen += bit ? p.bx1 : p.bx0;
      ca += 5;
      cd += 5;
    }
    c += mpz_class(static_cast<unsigned long>(small));
    c += 4 + 1 + 1;  // sentinel: halve(1), jz taken, discard bit
  }

  // global append telescope: 1785 * sum of acc values before each append
  c += 7 * (v_syn - byte_digit_sum(v_syn));

  // TAIL
  {
    // pads: 7 doublings on v_syn * 2^i
    c += 7 * v_syn * 127 + 14;
    // bit appends: doublings on v_syn*2^(7+j) + floor(y/2^(t-j))
    mpz_class two_t;
    mpz_ui_pow_ui(two_t.get_mpz_t(), 2, static_cast<unsigned long>(t));
    c += 7 * v_syn * 128 * (two_t - 1);
    c += 7 * leg_y;
    c += 2 * T;  // +2 per doubling
    // yD pops mirror SYN: halves over u0 plus word-sized glue
    c += 7 * leg_u + 2 * (popu - 1) + 2 * T;
    c += 2 * T;       // jz not taken
    c += T + pop;     // bb branch, inc racc2 on a one bit
    c += T;           // jmp
    c += 4 + 1 + 1;   // sentinel
  }

  // G
  {
    c += 1;                // mv(r1, r2) on x = 0
    c += 3 * code + 1;     // mv(racc2, r1)
    mpz_class rjunk = mpz_class(static_cast<unsigned long>(t)) - pop;
    for (const LitByte& l : S.hdr) rjunk += 8 - byte_pop(l.b);
    c += 2 * rjunk + 1;
    c += 2 * (5 * mpz_class(static_cast<unsigned long>(t))) + 1;      // ca
    c += 2 * (5 * mpz_class(static_cast<unsigned long>(t)) + 4) + 1;  // cd
    c += 2 * mpz_class(t & 1) + 1;                                    // pf
    c += 1;                                                           // jmp out
  }

  Bytes yb = value_to_bytes(y);
  if (yb.size() != n) throw std::logic_error("selfref: seed byte length drifted");
  out.regen += yb;
  out.cost_base = c;
  return out;
}

}  // namespace detail

inline SelfRef selfref_build(const Program& tmpl) {
  validate(tmpl);
  std::uint32_t tmax = 2;
  for (const Instr& i : tmpl.ins)
    if (i.op != Op::Halt && i.reg > tmax) tmax = i.reg;
  if (tmax > 0xFFFFFF00u) throw std::invalid_argument("selfref: template register too large");
  std::uint32_t base = tmax + 1;
  // keep the whole scratch band at one varint width so parity cannot change
  // record lengths between fixpoint rounds
  auto width = [](std::uint32_t id) { return id < 128 ? 1 : id < 16384 ? 2 : id < (1u << 21) ? 3 : 4; };
  while (width(base + 1) != width(base + 18)) base++;
  detail::Regs R = detail::make_regs(base);

  // fixpoint over (n, N): the builder depends on them only through the
  // header varint and the final-register parity
  std::uint64_t n_hat = 3000;
  std::uint64_t t_hat = 8 * n_hat - 7;
  std::uint64_t nn_hat = 0;
  Program bprog, breloc, treloc;
  detail::BScript script;
  Bytes records;
  bool converged = false;
  for (int round = 0; round < 32; round++) {
    std::uint64_t a_len = 5 * t_hat;
    Bytes hdr;
    if (nn_hat == 0) nn_hat = a_len + 1500 + tmpl.ins.size();
    put_varint(hdr, nn_hat);
    bprog = detail::emit_b(R, hdr, (t_hat & 1) != 0, script);
    breloc = detail::relocate(bprog, static_cast<std::uint32_t>(a_len));
    treloc = detail::relocate(tmpl, static_cast<std::uint32_t>(a_len + bprog.ins.size()));
    std::vector<Instr> tail = breloc.ins;
    tail.insert(tail.end(), treloc.ins.begin(), treloc.ins.end());
    records = detail::records_of(tail);
    std::uint64_t n_new = records.size();
    std::uint64_t t_new = 8 * n_new - 7;
    std::uint64_t nn_new = 5 * t_new + bprog.ins.size() + tmpl.ins.size();
    if (n_new == n_hat && nn_new == nn_hat) {
      converged = true;
      break;
    }
    n_hat = n_new;
    t_hat = t_new;
    nn_hat = nn_new;
  }
  if (!converged) throw std::runtime_error("selfref: seed failed to stabilize");

  mpz_class y = bytes_to_value(records);
  std::uint64_t t = t_hat;
  if (mpz_sizeinbase(y.get_mpz_t(), 2) != t)
    throw std::logic_error("selfref: seed bit length mismatch");

  // loader
  Program e;
  e.ins.reserve(5 * t + bprog.ins.size() + tmpl.ins.size());
  for (std::uint64_t j = 0; j < t; j++) {
    bool bit = mpz_tstbit(y.get_mpz_t(), static_cast<mp_bitcnt_t>(t - 1 - j));
    std::uint32_t src = (j % 2 == 0) ? R.rY : R.rX;
    std::uint32_t dst = (j % 2 == 0) ? R.rX : R.rY;
    std::uint32_t pc = static_cast<std::uint32_t>(5 * j);
    e.ins.push_back(decjz(src, pc + 4));
    e.ins.push_back(inc(dst));
    e.ins.push_back(inc(dst));
    e.ins.push_back(decjz(R.z, pc));
    e.ins.push_back(inc(bit ? dst : R.rjunk));
  }
  e.ins.insert(e.ins.end(), breloc.ins.begin(), breloc.ins.end());
  e.ins.insert(e.ins.end(), treloc.ins.begin(), treloc.ins.end());
  validate(e);

  SelfRef sr;
  sr.prog = std::move(e);
  sr.code = program_code(sr.prog);
  sr.a_len = static_cast<std::uint32_t>(5 * t);
  sr.b_len = static_cast<std::uint32_t>(bprog.ins.size());
  sr.pro_end = sr.a_len + sr.b_len;
  sr.base = base;
  sr.y = y;

  // v_syn: assembled value before the tail = value(0x02 ++ varint(N) ++ loader records)
  Bytes full = program_bytes(sr.prog);
  if (full.size() <= records.size()) throw std::logic_error("selfref: record accounting");
  mpz_class v_syn = bytes_to_value(full.substr(0, full.size() - records.size()));

  detail::Replay rep = detail::replay(script, y, records.size(), t, sr.code, v_syn);
  if (rep.regen != full) throw std::logic_error("selfref: synthesis replay mismatch");
  sr.pro_cost_base = rep.cost_base;
  return sr;
}

// The spec'd operation: just the program.
inline Program selfref_program(const Program& tmpl) { return selfref_build(tmpl).prog; }

inline mpz_class selfref_overhead(const SelfRef& sr, const mpz_class& x) {
  return sr.pro_cost_base + 3 * x;
}

// Composite exact runner: closed-form prologue, interpreter tail.
inline RunResult selfref_run(const SelfRef& sr, const mpz_class& x, const mpz_class& fuel) {
  mpz_class pro = selfref_overhead(sr, x);
  bool bounded = fuel >= 0;
  if (bounded && fuel < pro) {
    RunResult r;
    r.halted = false;
    r.time = fuel;
    r.config.pc = 0;
    r.config.reg(1) = RVal::from_mpz(x);
    return r;
  }
  Config c;
  c.pc = sr.pro_end;
  c.reg(1) = RVal::from_mpz(sr.code);
  c.reg(2) = RVal::from_mpz(x);
  RunResult r = run_config(sr.prog, std::move(c), bounded ? mpz_class(fuel - pro) : fuel);
  r.time += pro;
  return r;
}

inline masm::MachineHandle selfref_machine(const Program& tmpl) {
  auto sr = std::make_shared<SelfRef>(selfref_build(tmpl));
  return masm::MachineHandle{
      sr->prog, [sr](const std::vector<mpz_class>& in, const mpz_class& fuel)
                    -> std::optional<RunResult> {
        if (in.size() != 1) return std::nullopt;
        return selfref_run(*sr, in[0], fuel);
      }};
}

}  // namespace godel::selfref
