#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "godel/machine.hpp"

using namespace godel;

namespace {

// r0 := r1 + r2, via two drain loops. r9 stays zero and serves as goto.
Program adder() {
  Program p;
  p.ins = {
      decjz(1, 3), inc(0), decjz(9, 0),
      decjz(2, 6), inc(0), decjz(9, 3),
      halt(),
  };
  return p;
}

}  // namespace

TEST_CASE("pinned runs") {
  RunResult r = run(Program{{halt()}}, std::vector<std::uint64_t>{0}, 10);
  REQUIRE(r.halted);
  REQUIRE(r.output == 0);
  REQUIRE(r.time == 1);

  r = run(adder(), std::vector<std::uint64_t>{2, 3}, 1000);
  REQUIRE(r.halted);
  REQUIRE(r.output == 5);
  REQUIRE(r.time == 18);  // 3 per drained unit, 1 per exit test, 1 halt

  r = run(Program{{decjz(9, 0)}}, std::vector<std::uint64_t>{}, 1000);
  REQUIRE(!r.halted);
  REQUIRE(r.time == 1000);
}

TEST_CASE("cycle acceleration is exact on large counts") {
  std::vector<mpz_class> in{mpz_class(1000000000), mpz_class(7)};
  RunResult r = run(adder(), in, mpz_class("100000000000"));
  REQUIRE(r.halted);
  REQUIRE(r.output == 1000000007);
  REQUIRE(r.time == mpz_class(3) * 1000000007 + 3);

  // partial advance respects fuel exactly
  RunResult cut = run(adder(), in, mpz_class(500000));
  REQUIRE(!cut.halted);
  REQUIRE(cut.time == 500000);
}

TEST_CASE("fuel monotonicity and halt-time boundary") {
  std::mt19937_64 rng(7);
  int halted_seen = 0;
  for (int trial = 0; trial < 200; trial++) {
    Program p;
    std::uint32_t n = 1 + static_cast<std::uint32_t>(rng() % 6);
    for (std::uint32_t i = 0; i < n; i++) {
      switch (rng() % 3) {
        case 0:
          p.ins.push_back(halt());
          break;
        case 1:
          p.ins.push_back(inc(static_cast<std::uint32_t>(rng() % 3)));
          break;
        default:
          p.ins.push_back(decjz(static_cast<std::uint32_t>(rng() % 3),
                                static_cast<std::uint32_t>(rng() % (n + 1))));
          break;
      }
    }
    std::vector<std::uint64_t> in{rng() % 5, rng() % 5};
    RunResult r = run(p, in, 2000);
    if (!r.halted) continue;
    halted_seen++;
    REQUIRE(r.time <= 2000);
    std::uint64_t t = r.time.get_ui();
    RunResult exact = run(p, in, t);
    REQUIRE(exact.halted);
    REQUIRE(exact.output == r.output);
    REQUIRE(exact.time == r.time);
    if (t > 0) {
      RunResult starved = run(p, in, t - 1);
      REQUIRE(!starved.halted);
    }
    RunResult roomy = run(p, in, 100000);
    REQUIRE(roomy.halted);
    REQUIRE(roomy.output == r.output);
    REQUIRE(roomy.time == r.time);
  }
  REQUIRE(halted_seen > 50);
}

TEST_CASE("accelerated and naive runs agree") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 300; trial++) {
    Program p;
    std::uint32_t n = 1 + static_cast<std::uint32_t>(rng() % 8);
    for (std::uint32_t i = 0; i < n; i++) {
      switch (rng() % 4) {
        case 0:
          p.ins.push_back(halt());
          break;
        case 1:
        case 2:
          p.ins.push_back(inc(static_cast<std::uint32_t>(rng() % 4)));
          break;
        default:
          p.ins.push_back(decjz(static_cast<std::uint32_t>(rng() % 4),
                                static_cast<std::uint32_t>(rng() % (n + 1))));
          break;
      }
    }
    std::vector<std::uint64_t> in{rng() % 30, rng() % 30, rng() % 30};
    RunResult fast = run(p, in, 5000, true);
    RunResult slow = run(p, in, 5000, false);
    REQUIRE(fast.halted == slow.halted);
    REQUIRE(fast.time == slow.time);
    REQUIRE(fast.config.pc == slow.config.pc);
    std::size_t regs = std::max(fast.config.regs.size(), slow.config.regs.size());
    for (std::size_t rix = 0; rix < regs; rix++) {
      mpz_class a = rix < fast.config.regs.size() ? fast.config.regs[rix].to_mpz() : mpz_class(0);
      mpz_class b = rix < slow.config.regs.size() ? slow.config.regs[rix].to_mpz() : mpz_class(0);
      REQUIRE(a == b);
    }
  }
}

TEST_CASE("program text and binary round trips") {
  Program p = adder();
  REQUIRE(program_parse(program_text(p)) == p);
  REQUIRE(program_decode(program_code(p)) == p);
  REQUIRE(program_code(p) >= 256);

  Program labeled = program_parse("L0:\nDECJZ r1 Lend\nINC r0\nDECJZ r9 L0\nLend:\nHALT\n");
  REQUIRE(labeled.ins.size() == 4);
  REQUIRE(labeled.ins[0] == decjz(1, 3));

  REQUIRE_THROWS(program_parse("JUMP r0 L1\n"));
  REQUIRE_THROWS(program_parse("DECJZ r0 Lmissing\n"));
}

TEST_CASE("register value hybrid behaves like arithmetic") {
  RVal v;
  for (int i = 0; i < 1000; i++) v.inc();
  REQUIRE(v.to_mpz() == 1000);
  for (int i = 0; i < 400; i++) v.dec();
  REQUIRE(v.to_mpz() == 600);

  RVal big = RVal::from_mpz(mpz_class("340282366920938463463374607431768211455"));  // 2^128-1
  big.inc();
  mpz_class want("340282366920938463463374607431768211456");
  REQUIRE(big.to_mpz() == want);
  big.dec();
  big.dec();
  REQUIRE(big.to_mpz() == want - 2);

  RVal s;
  s.mul256_add(0x01);
  s.mul256_add(0xff);
  s.mul256_add(0x00);
  REQUIRE(s.to_mpz() == 0x01ff00);
  REQUIRE(s.divmod256() == 0x00);
  REQUIRE(s.divmod256() == 0xff);
  REQUIRE(s.to_mpz() == 1);

  RVal t = RVal::from_mpz(mpz_class(0b1011));
  REQUIRE(t.divmod2() == true);
  REQUIRE(t.divmod2() == true);
  REQUIRE(t.divmod2() == false);
  REQUIRE(t.to_mpz() == 1);
  t.mul2_add(false);
  t.mul2_add(true);
  REQUIRE(t.to_mpz() == 0b101);
}
