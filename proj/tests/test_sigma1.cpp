#include <catch2/catch_amalgamated.hpp>

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include <godel/ast.hpp>
#include <godel/eval.hpp>
#include <godel/machine.hpp>
#include <godel/sigma1.hpp>

using godel::compile_to_sigma1;
using godel::decjz;
using godel::eval_env;
using godel::eval_standard;
using godel::EvalCaps;
using godel::Formula;
using godel::FreeEnv;
using godel::halt;
using godel::halting_sentence;
using godel::inc;
using godel::kNoFuel;
using godel::Program;
using godel::run;
using godel::runtime_at_least;
using godel::sigma1_history_matrix;
using godel::sigma1_provenance;
using godel::sigma1_runtime_matrix;
using godel::Verdict;

namespace {

EvalCaps pure(std::uint64_t budget = 1000000, std::uint64_t cap = 1024) {
  EvalCaps c;
  c.node_budget = budget;
  c.witness_cap = cap;
  return c;
}

EvalCaps accel(std::uint64_t fuel = 1000000) {
  EvalCaps c;
  c.accelerate = true;
  c.accel_fuel = fuel;
  return c;
}

// Independent history encoder: steps the machine directly and packs the
// configuration digits per the documented layout (register r at digit R-1-r,
// counter at R, pc+1 at R+1, blocks of w = R+2 digits, N the smallest power
// of two above every digit).
struct Hist {
  mpz_class h, N;
  std::uint64_t steps = 0;
  bool complete = false;       // prefix ends in a terminal configuration
  bool halt_terminal = false;  // terminal sits on a halt instruction
  mpz_class output;            // r0 of the last block
};

Hist encode_history(const Program& p, const std::vector<mpz_class>& in,
                    std::optional<std::uint64_t> max_steps = std::nullopt) {
  std::uint32_t maxr = 0;
  for (const auto& i : p.ins)
    if (i.op != godel::Op::Halt && i.reg > maxr) maxr = i.reg;
  std::uint32_t R = maxr + 1;
  if (in.size() + 1 > R) R = static_cast<std::uint32_t>(in.size()) + 1;
  const std::uint32_t w = R + 2;

  std::vector<mpz_class> regs(R, 0);
  for (std::size_t i = 0; i < in.size(); i++) regs[i + 1] = in[i];
  std::uint64_t pc = 0, cnt = 0;
  std::vector<std::vector<mpz_class>> blocks;
  auto snap = [&] {
    std::vector<mpz_class> d(w, 0);
    for (std::uint32_t r = 0; r < R; r++) d[R - 1 - r] = regs[r];
    d[R] = mpz_class(static_cast<unsigned long>(cnt));
    d[R + 1] = mpz_class(static_cast<unsigned long>(pc + 1));
    blocks.push_back(std::move(d));
  };
  snap();
  Hist out;
  while (true) {
    if (pc >= p.ins.size()) {
      out.complete = true;
      break;
    }
    const auto& ins = p.ins[pc];
    if (ins.op == godel::Op::Halt) {
      out.complete = true;
      out.halt_terminal = true;
      break;
    }
    if (max_steps && cnt >= *max_steps) break;
    if (ins.op == godel::Op::Inc) {
      regs[ins.reg] += 1;
      pc++;
    } else if (regs[ins.reg] == 0) {
      pc = ins.target;
    } else {
      regs[ins.reg] -= 1;
      pc++;
    }
    cnt++;
    snap();
  }
  mpz_class maxd = 1;
  for (const auto& b : blocks)
    for (const auto& d : b)
      if (d > maxd) maxd = d;
  mpz_class N = 2;
  while (N <= maxd) N *= 2;
  mpz_class h = 0;
  for (std::size_t i = blocks.size(); i-- > 0;)
    for (std::size_t j = w; j-- > 0;) h = h * N + blocks[i][j];
  out.h = h;
  out.N = N;
  out.steps = cnt;
  out.output = regs[0];
  return out;
}

}  // namespace

TEST_CASE("history formula pins the trivial halting run") {
  Program p{{halt()}};
  Hist e = encode_history(p, {});
  CHECK(e.N == 2);
  CHECK(e.h == 4);
  CHECK(e.complete);
  CHECK(e.halt_terminal);

  Formula m = sigma1_history_matrix(p, 0);
  CHECK(eval_env(m, FreeEnv{{0, 2}, {1, 4}, {2, 0}}, pure()) == Verdict::True);
  CHECK(eval_env(m, FreeEnv{{0, 2}, {1, 4}, {2, 1}}, pure()) == Verdict::False);
  CHECK(eval_env(m, FreeEnv{{0, 2}, {1, 5}, {2, 0}}, pure()) == Verdict::False);
  CHECK(eval_env(m, FreeEnv{{0, 3}, {1, 4}, {2, 0}}, pure()) == Verdict::False);

  Formula H = compile_to_sigma1(p, 0);
  CHECK(eval_env(H, FreeEnv{{0, 0}}, pure()) == Verdict::True);
  CHECK(eval_env(H, FreeEnv{{0, 1}}, pure()) == Verdict::Unknown);
  CHECK(eval_env(H, FreeEnv{{0, 0}}, accel()) == Verdict::True);
  CHECK(eval_env(H, FreeEnv{{0, 1}}, accel()) == Verdict::False);

  Formula s = halting_sentence(p, {});
  CHECK(godel::is_sentence(s));
  CHECK(eval_standard(s, accel()) == Verdict::True);
  CHECK(eval_standard(s, pure()) == Verdict::True);
}

TEST_CASE("history formula pins the one-step incrementer") {
  Program p{{inc(0)}};
  Hist e = encode_history(p, {});
  CHECK(e.N == 4);
  CHECK(e.h == 2384);
  CHECK(e.complete);
  CHECK_FALSE(e.halt_terminal);
  CHECK(e.output == 1);
  CHECK(e.steps == 1);

  Formula m = sigma1_history_matrix(p, 0);
  EvalCaps deep = pure(10000000);
  CHECK(eval_env(m, FreeEnv{{0, 4}, {1, 2384}, {2, 1}}, deep) == Verdict::True);
  CHECK(eval_env(m, FreeEnv{{0, 4}, {1, 2384}, {2, 0}}, deep) == Verdict::False);
  // bumping an output digit of the top block breaks the step equation
  CHECK(eval_env(m, FreeEnv{{0, 4}, {1, 2384 + 64}, {2, 1}}, deep) ==
        Verdict::False);
  // the same digits packed with too small a base collide and are rejected
  CHECK(eval_env(m, FreeEnv{{0, 2}, {1, 92}, {2, 1}}, deep) == Verdict::False);

  Formula H = compile_to_sigma1(p, 0);
  CHECK(eval_env(H, FreeEnv{{0, 1}}, accel()) == Verdict::True);
  CHECK(eval_env(H, FreeEnv{{0, 0}}, accel()) == Verdict::False);
  CHECK(eval_env(H, FreeEnv{{0, 2}}, accel()) == Verdict::False);
}

TEST_CASE("input registers flow into the initial block") {
  Program p{{decjz(1, 1)}};
  Hist e1 = encode_history(p, {mpz_class(1)});
  CHECK(e1.N == 4);
  CHECK(e1.h == 36929);
  Hist e0 = encode_history(p, {mpz_class(0)});
  CHECK(e0.h == 36928);

  Formula m = sigma1_history_matrix(p, 1);
  EvalCaps deep = pure(20000000);
  // decrement branch of the jump-if-zero
  CHECK(eval_env(m, FreeEnv{{0, 4}, {1, 36929}, {2, 0}, {3, 1}}, deep) ==
        Verdict::True);
  // jump branch
  CHECK(eval_env(m, FreeEnv{{0, 4}, {1, 36928}, {2, 0}, {3, 0}}, deep) ==
        Verdict::True);
  CHECK(eval_env(m, FreeEnv{{0, 4}, {1, 36929}, {2, 1}, {3, 1}}, deep) ==
        Verdict::False);
  CHECK(eval_env(m, FreeEnv{{0, 4}, {1, 36929}, {2, 0}, {3, 2}}, deep) ==
        Verdict::False);

  Formula H = compile_to_sigma1(p, 1);
  CHECK(eval_env(H, FreeEnv{{0, 0}, {1, 1}}, accel()) == Verdict::True);
  CHECK(eval_env(H, FreeEnv{{0, 1}, {1, 1}}, accel()) == Verdict::False);
  // an unresolved input leaves the instance undecided
  CHECK(eval_env(H, FreeEnv{{0, 0}}, accel()) == Verdict::Unknown);
}

TEST_CASE("accelerated halting evaluation follows the machine") {
  Program inc3{{inc(0), inc(0), inc(0)}};
  Formula H3 = compile_to_sigma1(inc3, 0);
  for (unsigned long y = 0; y <= 4; y++) {
    CAPTURE(y);
    CHECK(eval_env(H3, FreeEnv{{0, mpz_class(y)}}, accel()) ==
          (y == 3 ? Verdict::True : Verdict::False));
  }
  // pure evaluation never contradicts the accelerated verdict
  CHECK(eval_env(H3, FreeEnv{{0, 3}}, pure()) != Verdict::False);
  CHECK(eval_env(H3, FreeEnv{{0, 2}}, pure()) != Verdict::True);

  Program adder{
      {decjz(1, 3), inc(0), decjz(3, 0), decjz(2, 6), inc(0), decjz(3, 3)}};
  auto rr = run(adder, std::vector<mpz_class>{2, 3}, kNoFuel);
  REQUIRE(rr.halted);
  CHECK(rr.output == 5);
  CHECK(rr.time == 17);

  Hist e = encode_history(adder, {mpz_class(2), mpz_class(3)});
  CHECK(e.complete);
  CHECK_FALSE(e.halt_terminal);
  CHECK(e.output == 5);
  CHECK(e.steps == 17);

  Formula Ha = compile_to_sigma1(adder, 2);
  CHECK(eval_env(Ha, FreeEnv{{0, 5}, {1, 2}, {2, 3}}, accel()) == Verdict::True);
  CHECK(eval_env(Ha, FreeEnv{{0, 4}, {1, 2}, {2, 3}}, accel()) == Verdict::False);
  CHECK(eval_standard(halting_sentence(adder, {mpz_class(2), mpz_class(3)}),
                      accel()) == Verdict::True);
}

TEST_CASE("runtime bounds count charged steps") {
  Program adder{
      {decjz(1, 3), inc(0), decjz(3, 0), decjz(2, 6), inc(0), decjz(3, 3)}};
  std::vector<mpz_class> in{2, 3};
  for (unsigned long t = 0; t <= 20; t++) {
    CAPTURE(t);
    CHECK(eval_standard(runtime_at_least(adder, in, mpz_class(t)), accel()) ==
          (t <= 17 ? Verdict::True : Verdict::False));
  }

  // a fall-off run charges exactly its executed instructions; an executed
  // halt charges one more, credited by the halt disjunct on the top block
  Program drop{{inc(0)}};
  Program stop{{inc(0), halt()}};
  CHECK(run(drop, std::vector<mpz_class>{}, kNoFuel).time == 1);
  CHECK(run(stop, std::vector<mpz_class>{}, kNoFuel).time == 2);

  Hist ed = encode_history(drop, {});
  Hist es = encode_history(stop, {});
  CHECK(ed.h == 2384);
  CHECK(ed.h == es.h);  // identical digits, different terminal reading

  EvalCaps deep = pure(10000000);
  FreeEnv env{{0, 4}, {1, 2384}};
  CHECK(eval_env(sigma1_runtime_matrix(drop, {}, 1), env, deep) == Verdict::True);
  CHECK(eval_env(sigma1_runtime_matrix(drop, {}, 2), env, deep) == Verdict::False);
  CHECK(eval_env(sigma1_runtime_matrix(stop, {}, 2), env, deep) == Verdict::True);
  CHECK(eval_env(sigma1_runtime_matrix(stop, {}, 3), env, deep) == Verdict::False);

  // a one-block prefix witnesses zero executed steps
  Hist e0 = encode_history(drop, {}, 0);
  CHECK(e0.h == 4);
  CHECK(e0.N == 2);
  FreeEnv env0{{0, 2}, {1, 4}};
  CHECK(eval_env(sigma1_runtime_matrix(drop, {}, 0), env0, deep) == Verdict::True);
  CHECK(eval_env(sigma1_runtime_matrix(drop, {}, 1), env0, deep) == Verdict::False);

  for (unsigned long t = 0; t <= 3; t++) {
    CAPTURE(t);
    CHECK(eval_standard(runtime_at_least(drop, {}, mpz_class(t)), accel()) ==
          (t <= 1 ? Verdict::True : Verdict::False));
    CHECK(eval_standard(runtime_at_least(stop, {}, mpz_class(t)), accel()) ==
          (t <= 2 ? Verdict::True : Verdict::False));
  }
}

TEST_CASE("diverging programs stay undecided") {
  Program loop{{decjz(0, 0)}};
  Formula s = halting_sentence(loop, {});
  CHECK(eval_standard(s, accel(10000)) == Verdict::Unknown);
  CHECK(eval_standard(s, pure()) == Verdict::Unknown);

  // no small code fakes a halting history
  Formula m = sigma1_history_matrix(loop, 0);
  for (unsigned long N : {2ul, 4ul}) {
    for (unsigned long h = 0; h <= 256; h++) {
      CAPTURE(N, h);
      CHECK(eval_env(m, FreeEnv{{0, mpz_class(N)}, {1, mpz_class(h)}, {2, 0}},
                     pure()) != Verdict::True);
    }
  }

  auto rr = run(loop, std::vector<mpz_class>{}, mpz_class(10000));
  REQUIRE(!rr.halted);
  // a verified prefix bounds what the accelerated verdict can assert
  mpz_class seen = rr.time;
  CHECK(eval_standard(runtime_at_least(loop, {}, seen), accel(10000)) ==
        Verdict::True);
  CHECK(eval_standard(runtime_at_least(loop, {}, seen + 1), accel(10000)) ==
        Verdict::True);
  CHECK(eval_standard(runtime_at_least(loop, {}, seen + 2), accel(10000)) ==
        Verdict::Unknown);
}

TEST_CASE("witness hooks decide compound goals") {
  using godel::add;
  using godel::equal;
  using godel::exists;
  using godel::land;
  using godel::le;
  using godel::succ;
  using godel::var;

  Program inc2{{inc(0), inc(0)}};
  Program inc3{{inc(0), inc(0), inc(0)}};
  Formula H2 = compile_to_sigma1(inc2, 0);
  Formula H3 = compile_to_sigma1(inc3, 0);

  // the output is even: ∃z <= y with z + z = y
  Formula even =
      exists(land(le(var(0), var(1)), equal(add(var(0), var(0)), var(1))));

  CHECK(eval_standard(exists(land(H2, even)), accel()) == Verdict::True);
  CHECK(eval_standard(exists(land(H3, even)), accel()) == Verdict::False);

  Program loop{{decjz(0, 0)}};
  Formula HL = compile_to_sigma1(loop, 0);
  CHECK(eval_standard(exists(land(HL, even)), accel(10000)) == Verdict::Unknown);

  // nested goals, each halting formula directly under its own quantifier
  Formula chain =
      exists(land(H2, exists(land(H3, equal(succ(var(1)), var(0))))));
  CHECK(eval_standard(chain, accel()) == Verdict::True);
  Formula chain2 = exists(land(H2, exists(land(H3, equal(var(1), var(0))))));
  CHECK(eval_standard(chain2, accel()) == Verdict::False);
}

TEST_CASE("random programs agree with direct simulation") {
  std::mt19937 rng(20240817);
  auto rnd = [&](std::uint32_t lo, std::uint32_t hi) {
    return lo + static_cast<std::uint32_t>(rng() % (hi - lo + 1));
  };
  int halted_count = 0;
  const std::uint64_t fuel = 100000;
  for (int it = 0; it < 50; it++) {
    std::uint32_t len = rnd(1, 6);
    Program p;
    for (std::uint32_t i = 0; i < len; i++) {
      std::uint32_t k = rnd(0, 9);
      if (k == 0)
        p.ins.push_back(halt());
      else if (k <= 5)
        p.ins.push_back(inc(rnd(0, 3)));
      else
        p.ins.push_back(decjz(rnd(0, 3), rnd(0, len)));
    }
    std::uint32_t arity = rnd(0, 2);
    std::vector<mpz_class> in;
    for (std::uint32_t i = 0; i < arity; i++) in.push_back(mpz_class(rnd(0, 4)));

    CAPTURE(it, len, arity);
    auto rr = run(p, in, mpz_class(static_cast<unsigned long>(fuel)));
    Formula H = compile_to_sigma1(p, arity);
    FreeEnv env;
    for (std::uint32_t i = 0; i < arity; i++) env[i + 1] = in[i];

    if (rr.halted) {
      halted_count++;
      env[0] = rr.output;
      CHECK(eval_env(H, env, accel(fuel)) == Verdict::True);
      FreeEnv wrong = env;
      wrong[0] = rr.output + 1;
      CHECK(eval_env(H, wrong, accel(fuel)) == Verdict::False);
      CHECK(eval_standard(halting_sentence(p, in), accel(fuel)) == Verdict::True);
      CHECK(eval_standard(runtime_at_least(p, in, rr.time), accel(fuel)) ==
            Verdict::True);
      CHECK(eval_standard(runtime_at_least(p, in, rr.time + 1), accel(fuel)) ==
            Verdict::False);

      Hist e = encode_history(p, in);
      REQUIRE(e.complete);
      CHECK(e.output == rr.output);
      CHECK(mpz_class(static_cast<unsigned long>(e.steps)) +
                (e.halt_terminal ? 1 : 0) ==
            rr.time);

      // pure evaluation agrees wherever it completes
      CHECK(eval_env(H, env, pure(200000)) != Verdict::False);

      if (e.h <= 3000) {
        Formula m = sigma1_history_matrix(p, arity);
        FreeEnv menv{{0, e.N}, {1, e.h}, {2, rr.output}};
        for (std::uint32_t i = 0; i < arity; i++) menv[3 + i] = in[i];
        CHECK(eval_env(m, menv, pure(20000000)) == Verdict::True);
        FreeEnv bad = menv;
        bad[1] = e.h + 1;
        CHECK(eval_env(m, bad, pure(1000000)) != Verdict::True);
      }
    } else {
      CHECK(eval_standard(halting_sentence(p, in), accel(fuel)) ==
            Verdict::Unknown);
      FreeEnv env0 = env;
      env0[0] = 0;
      CHECK(eval_env(H, env0, accel(fuel)) == Verdict::Unknown);
    }
  }
  CHECK(halted_count >= 15);
}

TEST_CASE("compilation is cached with provenance") {
  Program p{{inc(0), halt()}};
  Formula a = compile_to_sigma1(p, 1);
  Formula b = compile_to_sigma1(p, 1);
  CHECK(a == b);  // same interned instance, same registered hooks

  const godel::Sigma1Prov* pv = sigma1_provenance(a);
  REQUIRE(pv != nullptr);
  CHECK(pv->prog == p);
  CHECK(pv->arity == 1);

  Formula s = halting_sentence(p, {mpz_class(7)});
  CHECK(godel::is_sentence(s));
  REQUIRE(sigma1_provenance(s) != nullptr);
  CHECK(sigma1_provenance(s)->prog == p);
  CHECK(eval_standard(s, accel()) == Verdict::True);

  CHECK(compile_to_sigma1(p, 2) != a);  // arity is part of the interface

  Program bad{{decjz(0, 5)}};
  CHECK_THROWS(compile_to_sigma1(bad, 0));
}
