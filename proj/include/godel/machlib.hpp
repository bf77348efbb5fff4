#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <gmpxx.h>

#include "godel/ast.hpp"
#include "godel/coding.hpp"
#include "godel/machine.hpp"
#include "godel/masm.hpp"

// Substitution machines over syntax codes. build_sub() assembles a register
// program that reads a formula (or term) code c in r1 and one or two numbers
// in the following registers, and halts with r0 holding the code of the same
// syntax tree with numeral(d) spliced in place of each free occurrence of the
// target variable. The diagonal variant substitutes the input code into its
// own free v0.
//
// Every control path is built from masm primitives with closed-form step
// counts, so the whole run has an exact cost model: sub_mirror() reproduces
// the final configuration and the precise step count without executing the
// program, in time linear in the code length. The mirror is wired into a
// MachineHandle as the fast path; it declines (nullopt) anything malformed,
// which sends callers back to the real interpreter.
//
// Machine layout notes, shared by builder and mirror:
//  - input bytes are reversed into `rin` behind a 0x01 sentinel so the scan
//    pops them in order with divmod256;
//  - `top` counts pending subtrees of the current scope; binders push top+1
//    onto `s` as little-endian base-128 frames (staged through `tv` to flip
//    byte order) and continue with top = 1;
//  - subroutines return through dispatch chains on dedicated registers, one
//    decjz per call site, so each call costs its site id + 1 on return.

namespace godel {
namespace machlib {

// Head bytes the scanner dispatches on, in ladder order.
inline constexpr unsigned char kHeads[11] = {0x10, 0x11, 0x12, 0x20, 0x21, 0x22,
                                             0x23, 0x24, 0x25, 0x26, 0x27};

// Byte blocks of the numeral splice; they must stay identical to the
// serializer's numeral productions.
inline constexpr unsigned char kSpHead[3] = {0x12, 0x00, 0x01};
inline constexpr unsigned char kSpMul[11] = {0x12, 0x02, 0x02, 0x12, 0x00, 0x01,
                                             0x12, 0x00, 0x01, 0x11, 0x00};
inline constexpr unsigned char kSpLast[5] = {0x12, 0x00, 0x01, 0x11, 0x00};
inline constexpr unsigned char kSpZero[2] = {0x11, 0x00};

// Return-site ids for the shared append subroutine, in ladder order.
enum RaSite : unsigned {
  kRaConstHead = 0,
  kRaApplyHead,
  kRaArgc,
  kRaGrpHead,
  kRaNotHead,
  kRaBindHead,
  kRaVarHead,
  kRaVreCont,
  kRaVreLast,
  kRaClebByte,
  kRaSpHead0,  // three S-head bytes
  kRaSpHead1,
  kRaSpHead2,
  kRaSpMul0,  // eleven (SS0 * _) bytes
  kRaSpMul1,
  kRaSpMul2,
  kRaSpMul3,
  kRaSpMul4,
  kRaSpMul5,
  kRaSpMul6,
  kRaSpMul7,
  kRaSpMul8,
  kRaSpMul9,
  kRaSpMul10,
  kRaSpLast0,  // five S(0) bytes
  kRaSpLast1,
  kRaSpLast2,
  kRaSpLast3,
  kRaSpLast4,
  kRaSpZero0,  // two 0 bytes
  kRaSpZero1,
  kRaCount
};

// Return-site ids for the shared rin-pop subroutine.
enum RdSite : unsigned {
  kRdScan = 0,
  kRdVleb,
  kRdCleb,
  kRdArgc,
  kRdPrefix,
  kRdCount
};

// Return-site ids for the shared symbol-copy subroutine.
enum RcSite : unsigned { kRcConst = 0, kRcApply, kRcCount };

struct SubLayout {
  int targets = 1;   // 1: substitute v0; 2: substitute v0 and v1
  bool diag = false; // substitute the input code for v0 (single input)
  Program prog;
  std::uint32_t reg_count = 0;

  // register assignment
  std::uint32_t out = 0, c = 0, d0 = 0, d1 = 0, z = 0, rin = 0, m = 0, b = 0,
                q = 0, t = 0, u = 0, t2 = 0, g = 0, P = 0, k = 0, top = 0,
                s = 0, dreg = 0, w = 0, tv = 0, retA = 0, retD = 0, retC = 0;

  std::uint32_t halt_ok_pc = 0;
  std::uint32_t fail_halt_pc = 0;

  // region name -> first instruction index, in program order (for profiling)
  std::vector<std::pair<std::string, std::size_t>> marks;
};

inline SubLayout build_sub(int targets, bool diag) {
  if (targets != 1 && targets != 2) throw std::logic_error("build_sub: targets");
  if (diag && targets != 1) throw std::logic_error("build_sub: diag is unary");

  std::uint32_t nin = diag ? 1u : (targets == 2 ? 3u : 2u);
  masm::Asm A(nin);
  SubLayout L;
  L.targets = targets;
  L.diag = diag;
  L.out = 0;
  L.c = 1;
  L.z = A.zreg();
  L.d0 = diag ? A.fresh() : 2u;
  L.d1 = targets == 2 ? 3u : 0u;
  L.rin = A.fresh();
  L.m = A.fresh();
  L.b = A.fresh();
  L.q = A.fresh();
  L.t = A.fresh();
  L.u = A.fresh();
  L.t2 = A.fresh();
  L.g = A.fresh();
  L.P = A.fresh();
  L.k = A.fresh();
  L.top = A.fresh();
  L.s = A.fresh();
  L.dreg = A.fresh();
  L.w = A.fresh();
  L.tv = A.fresh();
  L.retA = A.fresh();
  L.retD = A.fresh();
  L.retC = A.fresh();

  using masm::Label;
  Label FAIL = A.label(), SCAN = A.label(), CC = A.label(), CASC = A.label(),
        SUCC = A.label(), HALT_OK = A.label(), DM_RIN = A.label(),
        COPYLEB = A.label(), SPLICE = A.label(), APPEND = A.label();
  Label DR[kRdCount], RC[kRcCount], RA[kRaCount], HIT[11];
  for (auto& l : DR) l = A.label();
  for (auto& l : RC) l = A.label();
  for (auto& l : RA) l = A.label();
  for (auto& l : HIT) l = A.label();

  auto mark = [&](const char* name) { L.marks.emplace_back(name, A.here()); };

  // call glue: the ladder consumes the return register, so each call site
  // loads its id fresh
  auto call_append = [&](unsigned id) {
    A.add_const(L.retA, id);
    A.jmp(APPEND);
    A.bind(RA[id]);
  };
  auto emit_byte = [&](unsigned v, unsigned id) {
    A.add_const(L.m, v);
    call_append(id);
  };
  auto call_dm = [&](unsigned id) {
    A.add_const(L.retD, id);
    A.jmp(DM_RIN);
    A.bind(DR[id]);
  };

  mark("INIT");
  if (diag) A.cp(L.c, L.d0, L.t);
  A.inc(L.rin);  // sentinel under the reversed bytes

  mark("REV");
  {
    Label rev_top = A.label(), rev_done = A.label();
    A.bind(rev_top);
    A.jz(L.c, rev_done);
    A.divmod256(L.c, L.m, L.b, L.q);
    A.append_byte(L.rin, L.m, L.t);
    A.jmp(rev_top);
    A.bind(rev_done);
  }

  mark("PREFIX");
  {
    call_dm(kRdPrefix);
    A.decjz(L.m, FAIL);  // byte 0x00: not a code
    Label ok = A.label();
    A.jz(L.m, ok);
    A.jmp(FAIL);  // prefix byte > 0x01: not syntax
    A.bind(ok);
    A.inc(L.out);  // out = 1, the prefix of the result
    A.inc(L.top);  // expect one subtree
  }

  mark("SCAN");
  {
    A.bind(SCAN);
    call_dm(kRdScan);
    int prev = -1;
    for (int i = 0; i < 11; i++) {
      int gap = kHeads[i] - prev - 1;
      for (int j = 0; j < gap; j++) A.decjz(L.m, FAIL);
      A.decjz(L.m, HIT[i]);
      prev = kHeads[i];
    }
    A.jmp(FAIL);
  }

  mark("HVAR");
  {
    A.bind(HIT[0]);  // 0x10
    A.decjz(L.top, FAIL);
    A.inc(L.P);
    Label vleb = A.label(), vleb_done = A.label();
    A.bind(vleb);
    call_dm(kRdVleb);
    A.divmod128(L.m, L.g, L.b, L.q);  // g = group, m = continuation bit
    {
      Label mul = A.label(), muld = A.label();
      A.bind(mul);
      A.decjz(L.g, muld);
      A.cp(L.P, L.k, L.t);
      A.jmp(mul);
      A.bind(muld);
    }
    for (int i = 0; i < 7; i++) A.dbl(L.P, L.t);
    A.decjz(L.m, vleb_done);
    A.jmp(vleb);
    A.bind(vleb_done);
    A.zero(L.P);

    // k == depth means a free occurrence of the first target
    Label vhit0 = A.label(), vhit1 = A.label();
    {
      A.cp(L.k, L.u, L.t);
      A.cp(L.dreg, L.t2, L.t);
      Label cmp = A.label(), cmp_uz = A.label(), cmp_neq = A.label();
      A.bind(cmp);
      A.jz(L.u, cmp_uz);
      A.jz(L.t2, cmp_neq);
      A.decjz(L.u, FAIL);
      A.decjz(L.t2, FAIL);
      A.jmp(cmp);
      A.bind(cmp_uz);
      A.jz(L.t2, vhit0);
      A.bind(cmp_neq);
      A.zero(L.u);
      A.zero(L.t2);
    }
    if (targets == 2) {
      A.cp(L.k, L.u, L.t);
      A.cp(L.dreg, L.t2, L.t);
      A.inc(L.t2);
      Label cmp = A.label(), cmp_uz = A.label(), cmp_neq = A.label();
      A.bind(cmp);
      A.jz(L.u, cmp_uz);
      A.jz(L.t2, cmp_neq);
      A.decjz(L.u, FAIL);
      A.decjz(L.t2, FAIL);
      A.jmp(cmp);
      A.bind(cmp_uz);
      A.jz(L.t2, vhit1);
      A.bind(cmp_neq);
      A.zero(L.u);
      A.zero(L.t2);
    }
    // no hit: re-emit the variable unchanged
    A.add_const(L.m, 0x10);
    call_append(kRaVarHead);
    {
      Label vre = A.label(), vre_last = A.label();
      A.bind(vre);
      A.divmod128(L.k, L.g, L.b, L.q);
      A.jz(L.k, vre_last);
      A.mv(L.g, L.m);
      A.add_const(L.m, 128);
      call_append(kRaVreCont);
      A.jmp(vre);
      A.bind(vre_last);
      A.mv(L.g, L.m);
      call_append(kRaVreLast);
      A.jmp(CC);
    }
    A.bind(vhit0);
    A.zero(L.k);
    A.cp(L.d0, L.w, L.t);
    A.jmp(SPLICE);
    if (targets == 2) {
      A.bind(vhit1);
      A.zero(L.k);
      A.cp(L.d1, L.w, L.t);
      A.jmp(SPLICE);
    } else {
      A.bind(vhit1);  // unreachable, keeps the label bound
    }
  }

  mark("HCONST");
  {
    A.bind(HIT[1]);  // 0x11
    A.decjz(L.top, FAIL);
    A.add_const(L.m, 0x11);
    call_append(kRaConstHead);
    A.add_const(L.retC, kRcConst);
    A.jmp(COPYLEB);
    A.bind(RC[kRcConst]);
    A.jmp(CC);
  }

  mark("HAPPLY");
  {
    Label body = A.label();
    A.bind(HIT[2]);  // 0x12
    A.decjz(L.top, FAIL);
    A.add_const(L.m, 0x12);
    A.jmp(body);
    A.bind(HIT[4]);  // 0x21, same shape as application
    A.decjz(L.top, FAIL);
    A.add_const(L.m, 0x21);
    A.jmp(body);
    A.bind(body);
    call_append(kRaApplyHead);
    A.add_const(L.retC, kRcApply);
    A.jmp(COPYLEB);
    A.bind(RC[kRcApply]);
    call_dm(kRdArgc);  // arity byte (arities stay below 128)
    A.cp(L.m, L.u, L.t);
    call_append(kRaArgc);
    A.mv(L.u, L.top);
    A.jmp(CC);
  }

  mark("HGRP");
  {
    Label body = A.label();
    const std::pair<int, unsigned> grp[4] = {{3, 0x20u}, {6, 0x23u}, {7, 0x24u}, {8, 0x25u}};
    for (auto [idx, byte] : grp) {
      A.bind(HIT[idx]);
      A.decjz(L.top, FAIL);
      A.add_const(L.m, byte);
      A.jmp(body);
    }
    A.bind(body);
    call_append(kRaGrpHead);
    A.inc(L.top);
    A.inc(L.top);
    A.jmp(SCAN);
  }

  mark("HNOT");
  {
    A.bind(HIT[5]);  // 0x22
    A.decjz(L.top, FAIL);
    A.add_const(L.m, 0x22);
    call_append(kRaNotHead);
    A.inc(L.top);
    A.jmp(SCAN);
  }

  mark("HBIND");
  {
    Label body = A.label();
    const std::pair<int, unsigned> bnd[2] = {{9, 0x26u}, {10, 0x27u}};
    for (auto [idx, byte] : bnd) {
      A.bind(HIT[idx]);
      A.decjz(L.top, FAIL);
      A.add_const(L.m, byte);
      A.jmp(body);
    }
    A.bind(body);
    call_append(kRaBindHead);
    // push top+1 as a base-128 frame, low group first once transferred
    A.mv(L.top, L.g);
    A.inc(L.g);
    Label enc = A.label(), lastb = A.label(), tr = A.label(), trd = A.label();
    A.bind(enc);
    A.divmod128(L.g, L.u, L.b, L.q);
    A.jz(L.g, lastb);
    A.mv(L.u, L.m);
    A.add_const(L.m, 128);
    A.append_byte(L.tv, L.m, L.t);
    A.jmp(enc);
    A.bind(lastb);
    A.mv(L.u, L.m);
    A.append_byte(L.tv, L.m, L.t);
    A.bind(tr);
    A.jz(L.tv, trd);
    A.divmod256(L.tv, L.m, L.b, L.q);
    A.append_byte(L.s, L.m, L.t);
    A.jmp(tr);
    A.bind(trd);
    A.inc(L.top);
    A.inc(L.dreg);
    A.jmp(SCAN);
  }

  mark("CASCADE");
  {
    A.bind(CC);
    A.jz(L.top, CASC);
    A.jmp(SCAN);
    A.bind(CASC);
    A.jz(L.dreg, SUCC);
    A.decjz(L.dreg, FAIL);  // nonzero here, never jumps
    A.inc(L.P);
    Label pop = A.label(), muld = A.label(), done = A.label();
    A.bind(pop);
    A.divmod256(L.s, L.m, L.b, L.q);
    A.divmod128(L.m, L.g, L.b, L.q);
    {
      Label mul = A.label();
      A.bind(mul);
      A.decjz(L.g, muld);
      A.cp(L.P, L.top, L.t);
      A.jmp(mul);
      A.bind(muld);
    }
    for (int i = 0; i < 7; i++) A.dbl(L.P, L.t);
    A.decjz(L.m, done);
    A.jmp(pop);
    A.bind(done);
    A.zero(L.P);
    A.decjz(L.top, FAIL);  // frames hold value+1, never zero
    A.jmp(CC);
  }

  mark("SUCCESS");
  {
    A.bind(SUCC);
    A.decjz(L.rin, FAIL);  // must consume exactly the sentinel
    A.jz(L.rin, HALT_OK);
    A.jmp(FAIL);
    A.bind(HALT_OK);
    L.halt_ok_pc = static_cast<std::uint32_t>(A.here());
    A.halt();
  }

  mark("FAIL");
  {
    A.bind(FAIL);
    A.zero(L.out);  // 0 is not a code, so failure is recognizable
    L.fail_halt_pc = static_cast<std::uint32_t>(A.here());
    A.halt();
  }

  mark("DM_RIN");
  {
    A.bind(DM_RIN);
    A.divmod256(L.rin, L.m, L.b, L.q);
    for (unsigned i = 0; i < kRdCount; i++) A.decjz(L.retD, DR[i]);
    A.jmp(FAIL);
  }

  mark("COPYLEB");
  {
    A.bind(COPYLEB);
    call_dm(kRdCleb);
    A.cp(L.m, L.u, L.t);
    call_append(kRaClebByte);
    A.divmod128(L.u, L.g, L.b, L.q);  // keep only the continuation bit
    A.zero(L.g);
    Label done = A.label();
    A.decjz(L.u, done);
    A.jmp(COPYLEB);
    A.bind(done);
    for (unsigned i = 0; i < kRcCount; i++) A.decjz(L.retC, RC[i]);
    A.jmp(FAIL);
  }

  mark("SPLICE");
  {
    A.bind(SPLICE);
    Label zero = A.label(), loop = A.label(), last = A.label(), nohead = A.label();
    A.jz(L.w, zero);
    A.bind(loop);
    A.halve(L.w, L.b, L.q);
    A.jz(L.w, last);
    A.decjz(L.b, nohead);
    for (int i = 0; i < 3; i++) emit_byte(kSpHead[i], kRaSpHead0 + i);
    A.bind(nohead);
    for (int i = 0; i < 11; i++) emit_byte(kSpMul[i], kRaSpMul0 + i);
    A.jmp(loop);
    A.bind(last);
    A.decjz(L.b, FAIL);  // the leading bit is always set
    for (int i = 0; i < 5; i++) emit_byte(kSpLast[i], kRaSpLast0 + i);
    A.jmp(CC);
    A.bind(zero);
    for (int i = 0; i < 2; i++) emit_byte(kSpZero[i], kRaSpZero0 + i);
    A.jmp(CC);
  }

  mark("APPEND");
  {
    A.bind(APPEND);
    A.append_byte(L.out, L.m, L.t);
    for (unsigned i = 0; i < kRaCount; i++) A.decjz(L.retA, RA[i]);
    A.jmp(FAIL);
  }

  L.prog = A.take();
  L.reg_count = A.reg_count();
  return L;
}

namespace mirror_detail {

// Region accumulator: cheap 64-bit adds for per-event costs, mpz for the
// value-dependent terms.
struct Acc {
  mpz_class big;
  std::uint64_t small = 0;
  void add(std::uint64_t v) {
    if (small >= (1ull << 62)) {
      big += static_cast<unsigned long>(small);
      small = 0;
    }
    small += v;
  }
  void addm(const mpz_class& v) { big += v; }
  mpz_class total() const { return big + mpz_class(static_cast<unsigned long>(small)); }
};

inline std::uint64_t sum_shifts(std::uint64_t v, int rounds) {
  std::uint64_t s = 0;
  for (int i = 1; i <= rounds; i++) s += v >> i;
  return s;
}

inline std::uint64_t pop64(std::uint64_t v) {
  return static_cast<std::uint64_t>(__builtin_popcountll(v));
}

// divmod256 on a value that fits 64 bits
inline std::uint64_t dm256_cost(std::uint64_t v) {
  return 7 * sum_shifts(v, 8) + 2 * pop64(v & 255) + (v & 255) + 24;
}

// divmod128 on a value that fits 64 bits
inline std::uint64_t dm128_cost(std::uint64_t v) {
  return 7 * sum_shifts(v, 7) + 2 * pop64(v & 127) + (v & 127) + 21;
}

// dispatch ladder: writes the hit index (-1 on fall-through) and returns steps
inline std::uint64_t ladder_cost(unsigned B, int* hit) {
  std::uint64_t cost = 0;
  long rem = static_cast<long>(B);
  int prev = -1;
  for (int i = 0; i < 11; i++) {
    long gap = kHeads[i] - prev - 1;
    if (rem < gap) {
      *hit = -1;
      return cost + rem + 1;
    }
    if (rem == gap) {
      *hit = i;
      return cost + gap + 1;
    }
    cost += gap + 1;
    rem -= gap + 1;
    prev = kHeads[i];
  }
  *hit = -1;
  return cost + 1;  // trailing jump to FAIL
}

}  // namespace mirror_detail

// Exact replay of a successful run: final configuration plus the precise step
// count, computed in time linear in the byte length of input and output.
// Returns nullopt whenever the program would take the failure exit or the
// replay cannot vouch for exactness (oversized output, arity >= 128); callers
// then fall back to the interpreter. Runs that exceed the fuel report
// time == fuel with the entry configuration, matching run_handle's contract.
inline std::optional<RunResult> sub_mirror(
    const SubLayout& L, const std::vector<mpz_class>& inputs, const mpz_class& fuel,
    std::map<std::string, mpz_class>* breakdown = nullptr) {
  using namespace mirror_detail;

  std::size_t nin = L.diag ? 1 : (L.targets == 2 ? 3 : 2);
  if (inputs.size() != nin) return std::nullopt;
  const mpz_class& c = inputs[0];
  if (c < 256 || inputs[0] < 0) return std::nullopt;
  mpz_class d0v = L.diag ? c : inputs[1];
  mpz_class d1v = L.targets == 2 ? inputs[2] : mpz_class(0);
  if (d0v < 0 || d1v < 0) return std::nullopt;

  Bytes in = value_to_bytes(c);
  if (in.empty() || static_cast<unsigned char>(in[0]) != 0x01) return std::nullopt;

  Acc r_init, r_rev, r_prefix, r_scan, r_hvar, r_hconst, r_happly, r_hgrp,
      r_hnot, r_hbind, r_cascade, r_success, r_dm, r_cleb, r_splice, r_append;

  const std::size_t n = in.size();
  constexpr std::size_t kMaxOut = std::size_t(1) << 28;

  Bytes outb;  // result bytes after the 0x01 prefix
  outb.reserve(n);
  std::uint64_t sum_k = 0;  // total value of appended bytes
  bool ok = true;

  auto glue = [&](Acc& region, unsigned id, unsigned v) {
    region.add(id + 1);                 // load return id, jump in
    r_append.add(3ull * v + 17 + id + 1);  // append smalls plus return ladder
    outb.push_back(static_cast<char>(v));
    sum_k += v;
    if (outb.size() > kMaxOut) ok = false;
  };

  // INIT: optional diagonal copy, then the sentinel
  if (L.diag) r_init.addm(7 * c + 2);
  r_init.add(1);

  // REV: all aggregates reduce to digit identities on c and on the reversed
  // value rin = 0x01 . reverse(bytes of c)
  mpz_class ds_c = 0;
  for (unsigned char byte : in) ds_c += byte;
  mpz_class s2_c = mpz_popcount(c.get_mpz_t());
  Bytes rev(in.rbegin(), in.rend());
  Bytes rinb;
  rinb.push_back(0x01);
  rinb += rev;
  mpz_class rin_fin = bytes_to_value(rinb);
  mpz_class s2_rin = mpz_popcount(rin_fin.get_mpz_t());
  {
    mpz_class nz(static_cast<unsigned long>(n));
    // pops of c during reversal
    r_rev.addm(7 * (c - s2_c) + 2 * s2_c + ds_c + 24 * nz);
    // appends onto rin; sum of pre-append values telescopes
    mpz_class sum_rin = (rin_fin - 1 - ds_c) / 255;
    r_rev.addm(1785 * sum_rin + 3 * ds_c + 17 * nz);
    r_rev.add(3 * n + 1);  // loop tests and jumps
    // every later pop goes through the shared subroutine; same identities on
    // the drain of rin down to the sentinel
    r_dm.addm(7 * (rin_fin - s2_rin) + 2 * (s2_rin - 1) + ds_c + 24 * nz);
  }

  // PREFIX: load id, jump, test the 0x01, start the result
  r_prefix.add(9);
  r_dm.add(kRdPrefix + 1);

  // main scan
  std::uint64_t top = 1;
  std::uint64_t dreg = 0;
  std::vector<std::uint64_t> frames;
  mpz_class s_val = 0;
  std::size_t pos = 1;
  constexpr std::uint64_t kTopGuard = 1ull << 40;

  auto splice = [&](const mpz_class& D) {
    if (D == 0) {
      r_splice.add(1);  // entry test jumps
      r_splice.add(kSpZero[0]);
      glue(r_splice, kRaSpZero0, kSpZero[0]);
      r_splice.add(kSpZero[1]);
      glue(r_splice, kRaSpZero1, kSpZero[1]);
      r_splice.add(1);  // jump out
      return;
    }
    r_splice.add(2);  // entry test falls through
    std::size_t bits = mpz_sizeinbase(D.get_mpz_t(), 2);
    mpz_class s2d = mpz_popcount(D.get_mpz_t());
    // all halvings at once
    r_splice.addm(7 * (D - s2d) + 2 * s2d + 2 * mpz_class(static_cast<unsigned long>(bits)));
    for (std::size_t j = 0; j + 1 < bits; j++) {
      r_splice.add(2);  // remainder test falls through
      if (mpz_tstbit(D.get_mpz_t(), j)) {
        r_splice.add(1);  // bit consumed
        for (int i = 0; i < 3; i++) {
          r_splice.add(kSpHead[i]);
          glue(r_splice, kRaSpHead0 + i, kSpHead[i]);
        }
      } else {
        r_splice.add(1);  // bit test jumps
      }
      for (int i = 0; i < 11; i++) {
        r_splice.add(kSpMul[i]);
        glue(r_splice, kRaSpMul0 + i, kSpMul[i]);
      }
      r_splice.add(1);  // loop back
      if (!ok) return;
    }
    r_splice.add(1 + 1);  // remainder test jumps, bit consumed
    for (int i = 0; i < 5; i++) {
      r_splice.add(kSpLast[i]);
      glue(r_splice, kRaSpLast0 + i, kSpLast[i]);
    }
    r_splice.add(1);  // jump out
  };

  auto copyleb = [&](unsigned rcid) -> bool {
    while (true) {
      if (pos >= n) return false;
      unsigned Lb = static_cast<unsigned char>(in[pos++]);
      r_cleb.add(kRdCleb + 1);
      r_dm.add(kRdCleb + 1);
      r_cleb.add(7ull * Lb + 2);
      glue(r_cleb, kRaClebByte, Lb);
      r_cleb.add(dm128_cost(Lb));
      r_cleb.add(2ull * (Lb & 127) + 1);
      if (Lb & 0x80) {
        r_cleb.add(2);
      } else {
        r_cleb.add(1);
        break;
      }
    }
    r_cleb.add(rcid + 1);
    return true;
  };

  // returns true when the formula is complete
  auto cascade_check = [&]() -> bool {
    while (true) {
      if (top != 0) {
        r_cascade.add(3);
        return false;
      }
      r_cascade.add(1);
      if (dreg == 0) {
        r_cascade.add(1);
        return true;
      }
      r_cascade.add(4);  // depth test, decrement, place value start
      dreg--;
      std::uint64_t val = frames.back();
      frames.pop_back();
      std::uint64_t enc = val + 1;
      mpz_class Pv = 1;
      while (true) {
        std::uint64_t grp = enc & 127;
        bool cont = (enc >> 7) != 0;
        std::uint64_t byteval = grp | (cont ? 0x80u : 0u);
        r_cascade.addm(masm::cost_divmod256(s_val));
        s_val = (s_val - static_cast<unsigned long>(byteval)) / 256;
        r_cascade.add(dm128_cost(byteval));
        r_cascade.addm(grp * (7 * Pv + 4) + 1);
        r_cascade.addm(889 * Pv + 14);
        Pv *= 128;
        if (cont) {
          r_cascade.add(2);
          enc >>= 7;
        } else {
          r_cascade.add(1);
          break;
        }
      }
      r_cascade.addm(2 * Pv + 1);
      r_cascade.add(2);  // consume the +1, loop back
      top = val;
    }
  };

  bool done = false;
  while (!done && ok) {
    if (pos >= n) return std::nullopt;
    unsigned B = static_cast<unsigned char>(in[pos++]);
    r_scan.add(1);
    r_dm.add(kRdScan + 1);
    int hit = -1;
    r_scan.add(ladder_cost(B, &hit));
    if (hit < 0) return std::nullopt;
    if (top == 0) return std::nullopt;  // the machine would take the fail exit

    switch (B) {
      case 0x10: {
        top--;
        r_hvar.add(2);  // consume expectation, start place value
        mpz_class kv = 0;
        mpz_class Pv = 1;
        while (true) {
          if (pos >= n) return std::nullopt;
          unsigned Lb = static_cast<unsigned char>(in[pos++]);
          r_hvar.add(kRdVleb + 1);
          r_dm.add(kRdVleb + 1);
          r_hvar.add(dm128_cost(Lb));
          std::uint64_t grp = Lb & 127;
          r_hvar.addm(grp * (7 * Pv + 4) + 1);
          kv += grp * Pv;
          r_hvar.addm(889 * Pv + 14);
          Pv *= 128;
          if (Lb & 0x80) {
            r_hvar.add(2);
          } else {
            r_hvar.add(1);
            break;
          }
        }
        r_hvar.addm(2 * Pv + 1);

        mpz_class dv(static_cast<unsigned long>(dreg));
        r_hvar.addm(7 * kv + 2);
        r_hvar.addm(7 * dv + 2);
        int cmp1 = cmp(kv, dv);
        mpz_class mn = cmp1 < 0 ? kv : dv;
        r_hvar.addm(7 * mn + (cmp1 == 0 ? 2 : 3));
        bool spliced = false;
        if (cmp1 == 0) {
          r_hvar.addm(2 * kv + 1 + 7 * d0v + 2 + 1);
          splice(d0v);
          spliced = true;
        } else {
          r_hvar.addm(cmp1 > 0 ? mpz_class(2 * (kv - dv) + 2) : mpz_class(2 * (dv - kv) + 2));
          if (L.targets == 2) {
            mpz_class dv1 = dv + 1;
            r_hvar.addm(7 * kv + 2);
            r_hvar.addm(7 * dv + 2 + 1);
            int cmp2 = cmp(kv, dv1);
            mpz_class mn2 = cmp2 < 0 ? kv : dv1;
            r_hvar.addm(7 * mn2 + (cmp2 == 0 ? 2 : 3));
            if (cmp2 == 0) {
              r_hvar.addm(2 * kv + 1 + 7 * d1v + 2 + 1);
              splice(d1v);
              spliced = true;
            } else {
              r_hvar.addm(cmp2 > 0 ? mpz_class(2 * (kv - dv1) + 2) : mpz_class(2 * (dv1 - kv) + 2));
            }
          }
        }
        if (!spliced) {
          r_hvar.add(0x10);
          glue(r_hvar, kRaVarHead, 0x10);
          mpz_class kr = kv;
          while (true) {
            r_hvar.addm(masm::cost_divmod128(kr));
            unsigned long grp = mpz_class(kr % 128).get_ui();
            kr /= 128;
            if (kr != 0) {
              r_hvar.add(2 + 3 * grp + 1 + 128);
              glue(r_hvar, kRaVreCont, static_cast<unsigned>(grp + 128));
              r_hvar.add(1);
            } else {
              r_hvar.add(1 + 3 * grp + 1);
              glue(r_hvar, kRaVreLast, static_cast<unsigned>(grp));
              break;
            }
          }
          r_hvar.add(1);  // jump to the scope check
        }
        done = cascade_check();
      } break;

      case 0x11: {
        top--;
        r_hconst.add(1 + 0x11);
        glue(r_hconst, kRaConstHead, 0x11);
        r_hconst.add(kRcConst + 1);  // load return id, jump in
        if (!copyleb(kRcConst)) return std::nullopt;
        r_hconst.add(1);  // jump to the scope check
        done = cascade_check();
      } break;

      case 0x12:
      case 0x21: {
        top--;
        r_happly.add(1 + B + 1);
        glue(r_happly, kRaApplyHead, B);
        r_happly.add(kRcApply + 1);
        if (!copyleb(kRcApply)) return std::nullopt;
        if (pos >= n) return std::nullopt;
        unsigned a = static_cast<unsigned char>(in[pos++]);
        if (a >= 128) return std::nullopt;  // single-byte arity only
        r_happly.add(kRdArgc + 1);
        r_dm.add(kRdArgc + 1);
        r_happly.add(7ull * a + 2);
        glue(r_happly, kRaArgc, a);
        r_happly.add(3ull * a + 1);
        r_happly.add(1);
        top += a;
        if (top > kTopGuard) return std::nullopt;
        done = cascade_check();
      } break;

      case 0x20:
      case 0x23:
      case 0x24:
      case 0x25: {
        top--;
        r_hgrp.add(1 + B + 1);
        glue(r_hgrp, kRaGrpHead, B);
        r_hgrp.add(3);
        top += 2;
      } break;

      case 0x22: {
        top--;
        r_hnot.add(1 + B);
        glue(r_hnot, kRaNotHead, B);
        r_hnot.add(2);
        top += 1;
      } break;

      case 0x26:
      case 0x27: {
        top--;
        r_hbind.add(1 + B + 1);
        glue(r_hbind, kRaBindHead, B);
        std::uint64_t val = top;
        r_hbind.add(3 * val + 1 + 1);  // move into the encoder, plus one
        std::uint64_t enc = val + 1;
        std::uint64_t tv = 0;
        while (true) {
          std::uint64_t grp = enc & 127;
          r_hbind.add(dm128_cost(enc));
          enc >>= 7;
          bool cont = enc != 0;
          std::uint64_t byteval = grp | (cont ? 0x80u : 0u);
          if (cont) {
            r_hbind.add(2 + 3 * grp + 1 + 128 + 1);
          } else {
            r_hbind.add(1 + 3 * grp + 1);
          }
          r_hbind.add(1785 * tv + 3 * byteval + 17);
          tv = tv * 256 + byteval;
          if (!cont) break;
        }
        while (tv != 0) {
          std::uint64_t byteval = tv & 255;
          r_hbind.add(2);
          r_hbind.add(dm256_cost(tv));
          tv >>= 8;
          r_hbind.addm(masm::cost_append_byte(s_val, mpz_class(static_cast<unsigned long>(byteval))));
          s_val = s_val * 256 + static_cast<unsigned long>(byteval);
          r_hbind.add(1);
        }
        r_hbind.add(1);  // transfer exit test
        r_hbind.add(3);  // reopen scope, deepen, rescan
        frames.push_back(val);
        top = 1;
        dreg++;
      } break;

      default:
        return std::nullopt;
    }
  }
  if (!ok) return std::nullopt;
  if (pos != n) return std::nullopt;
  r_success.add(3);

  // append subroutine aggregate: pre-append values telescope against the
  // final result (the prefix already counts as 1)
  Bytes outfull;
  outfull.push_back(0x01);
  outfull += outb;
  mpz_class out_fin = bytes_to_value(outfull);
  r_append.addm(7 * (out_fin - 1 - mpz_class(static_cast<unsigned long>(sum_k))));

  const std::pair<const char*, Acc*> regions[] = {
      {"INIT", &r_init},       {"REV", &r_rev},     {"PREFIX", &r_prefix},
      {"SCAN", &r_scan},       {"HVAR", &r_hvar},   {"HCONST", &r_hconst},
      {"HAPPLY", &r_happly},   {"HGRP", &r_hgrp},   {"HNOT", &r_hnot},
      {"HBIND", &r_hbind},     {"CASCADE", &r_cascade}, {"SUCCESS", &r_success},
      {"DM_RIN", &r_dm},       {"COPYLEB", &r_cleb}, {"SPLICE", &r_splice},
      {"APPEND", &r_append}};
  mpz_class total = 0;
  for (auto& [name, acc] : regions) total += acc->total();
  if (breakdown) {
    breakdown->clear();
    for (auto& [name, acc] : regions) (*breakdown)[name] = acc->total();
  }

  RunResult res;
  if (fuel >= 0 && total > fuel) {
    res.halted = false;
    res.output = 0;
    res.time = fuel;
    res.config.pc = 0;
    res.config.regs.resize(nin + 1);
    for (std::size_t i = 0; i < inputs.size(); i++)
      res.config.reg(static_cast<std::uint32_t>(i + 1)) = RVal::from_mpz(inputs[i]);
    return res;
  }

  res.halted = true;
  res.output = out_fin;
  res.time = total;
  res.config.pc = L.halt_ok_pc;
  res.config.regs.resize(L.reg_count);
  res.config.reg(L.out) = RVal::from_mpz(out_fin);
  res.config.reg(L.d0) = RVal::from_mpz(d0v);
  if (L.targets == 2) res.config.reg(L.d1) = RVal::from_mpz(d1v);
  return res;
}

inline masm::MachineHandle make_handle(const SubLayout& L) {
  return masm::MachineHandle{
      L.prog, [&L](const std::vector<mpz_class>& in, const mpz_class& fuel) {
        return sub_mirror(L, in, fuel);
      }};
}

// Shared instances. The layouts live for the program's lifetime so the fast
// paths can capture them by reference.
inline const SubLayout& sub_layout() {
  static const SubLayout L = build_sub(1, false);
  return L;
}
inline const SubLayout& sub2_layout() {
  static const SubLayout L = build_sub(2, false);
  return L;
}
inline const SubLayout& diag_layout() {
  static const SubLayout L = build_sub(1, true);
  return L;
}

// sub: r1 = code, r2 = d; halts with r0 = code of the tree with numeral(d)
// for every free occurrence of v0 (0 on malformed input)
inline const masm::MachineHandle& sub_machine() {
  static const masm::MachineHandle h = make_handle(sub_layout());
  return h;
}

// sub2: r1 = code, r2 = d0, r3 = d1; substitutes v0 and v1 together
inline const masm::MachineHandle& sub2_machine() {
  static const masm::MachineHandle h = make_handle(sub2_layout());
  return h;
}

// diag: r1 = code; substitutes the code's own value for v0
inline const masm::MachineHandle& diag_machine() {
  static const masm::MachineHandle h = make_handle(diag_layout());
  return h;
}

}  // namespace machlib
}  // namespace godel
