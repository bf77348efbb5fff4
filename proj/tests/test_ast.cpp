#include <catch2/catch_amalgamated.hpp>

#include "godel/ast.hpp"
#include "godel/coding.hpp"
#include "godel/hash.hpp"
#include "godel/text.hpp"

#include "gen.hpp"

using namespace godel;

TEST_CASE("varint round trip") {
  for (std::uint64_t v : {std::uint64_t(0), std::uint64_t(1), std::uint64_t(127), std::uint64_t(128),
                          std::uint64_t(300), std::uint64_t(16383), std::uint64_t(16384), UINT64_MAX}) {
    Bytes b;
    put_varint(b, v);
    std::size_t pos = 0;
    REQUIRE(get_varint(b, pos) == v);
    REQUIRE(pos == b.size());
    REQUIRE(b.size() == varint_len(v));
  }
}

TEST_CASE("sha256 known vectors") {
  REQUIRE(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  REQUIRE(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  Sha256 h;
  std::string a(1000000, 'a');
  h.update(a.data(), a.size());
  REQUIRE(h.hexdigest() == "cdc76e5c9914fb9281a1c7e284d73e67f1809a48a497200e046d39ccc7112cd0");
}

TEST_CASE("pinned code values") {
  // Variable(0): prefix 01, tag 10, index 00
  Term v0 = var(0);
  Bytes b = code_bytes(v0);
  REQUIRE(to_hex(b) == "011000");
  REQUIRE(code(v0) == 69632);

  REQUIRE_THROWS_AS(decode(mpz_class(255), arith_sig()), CodeError);
  REQUIRE(decode(mpz_class(69632), arith_sig()) == v0);

  // codes start at 256 by construction: one prefix byte plus payload
  REQUIRE(code(zero()) >= 256);
}

TEST_CASE("pinned parse examples") {
  REQUIRE(parse("0=0") == equal(zero(), zero()));
  REQUIRE(parse("∀v0 ¬ S(v0)=0") == forall(lnot(equal(succ(var(0)), zero()))));
  REQUIRE_THROWS_AS(parse("∀v0 (v0=v0 ∧"), ParseError);
  REQUIRE_THROWS_AS(parse("googol"), ParseError);
  REQUIRE(pretty(equal(zero(), zero())) == "0=0");
}

TEST_CASE("numeral pins") {
  // numeral(5) = S((SS0)*((SS0)*S(0)))
  Term ss0 = succ(succ(zero()));
  Term five = succ(mul(ss0, mul(ss0, succ(zero()))));
  REQUIRE(numeral(5) == five);
  REQUIRE(numeral(0) == zero());
  REQUIRE(numeral(1) == succ(zero()));
  REQUIRE(numeral(2) == mul(ss0, succ(zero())));
  REQUIRE(pretty(numeral(5)) == "S((S(S(0))*(S(S(0))*S(0))))");
  REQUIRE(parse_term(pretty(numeral(5))) == numeral(5));

  mpz_class big;
  mpz_ui_pow_ui(big.get_mpz_t(), 2, 64);
  std::size_t nodes = node_count(numeral(big));
  REQUIRE(nodes < 200);
  // 0, S(0), S(S(0)), and one (SS0)* node per halving: 3 + 64
  REQUIRE(nodes == 67);
}

TEST_CASE("numeral byte length formula matches serialization") {
  for (std::uint64_t n = 0; n < 300; n++) {
    Term t = numeral(n);
    REQUIRE(serialize(t).size() == t->byte_len);
    REQUIRE(numeral_byte_len(mpz_class(static_cast<unsigned long>(n))) == t->byte_len);
  }
  mpz_class big("123456789123456789123456789123456789");
  REQUIRE(serialize(numeral(big)).size() == numeral_byte_len(big));
}

TEST_CASE("numeral leaf folding is invisible in bytes") {
  std::uint32_t saved = numeral_fold_bits();
  numeral_fold_bits() = 8;  // fold at tiny sizes to exercise the leaf path
  mpz_class v("987654321987");
  Term leaf = numeral(v);
  REQUIRE(leaf->tag == Tag::Numeral);
  numeral_fold_bits() = 10000;
  Term expanded = numeral(v);
  REQUIRE(expanded->tag != Tag::Numeral);
  REQUIRE(serialize(leaf) == serialize(expanded));
  REQUIRE(leaf->byte_len == expanded->byte_len);
  REQUIRE(pretty(leaf) == pretty(expanded));

  // decode folds the same value back to the same leaf
  numeral_fold_bits() = 8;
  REQUIRE(decode(code(leaf), arith_sig()) == leaf);
  numeral_fold_bits() = saved;
}

TEST_CASE("substitution pins") {
  Formula f = equal(var(0), var(0));
  REQUIRE(substitute(f, 0, numeral(3)) == equal(numeral(3), numeral(3)));

  // bound occurrences are untouched; only the free variable is replaced
  Formula g = forall(land(equal(var(0), var(0)), equal(var(1), zero())));
  REQUIRE(substitute(g, 0, numeral(2)) ==
          forall(land(equal(var(0), var(0)), equal(numeral(2), zero()))));

  // substituting a missing variable is the identity
  REQUIRE(substitute(g, 5, numeral(1)) == g);

  REQUIRE_THROWS(substitute(f, 0, var(3)));  // open term rejected
}

TEST_CASE("binding free variables by wrapping a quantifier") {
  // free 0 becomes bound, free j >= 1 becomes free j-1, indices unchanged
  Formula open = equal(var(0), var(1));  // free 0 = free 1 (as terms v0, v1)
  Formula closedish = forall(open);
  REQUIRE(closedish->free_height == 1);
  REQUIRE(free_vars(closedish) == std::vector<std::uint32_t>{0});
  REQUIRE(forall(closedish)->free_height == 0);

  Formula lifted = lift_free(open, 1);
  REQUIRE(lifted == equal(var(1), var(2)));
}

TEST_CASE("round trips on random ASTs") {
  testgen::Gen gen(20260819);
  for (int i = 0; i < 500; i++) {
    Formula f = gen.formula(4, 0);
    CAPTURE(pretty(f));
    REQUIRE(parse(pretty(f)) == f);
    REQUIRE(decode(code(f), arith_sig()) == f);
    REQUIRE(code(f) >= 256);
    // alpha-variant text parses to the same node, hence the same code
    REQUIRE(parse(gen.alpha_text(f)) == f);
  }
}

TEST_CASE("decode rejects malformed byte strings") {
  REQUIRE_THROWS_AS(decode_bytes(from_hex("0120"), arith_sig()), CodeError);        // truncated Equal
  REQUIRE_THROWS_AS(decode_bytes(from_hex("011000ff"), arith_sig()), CodeError);    // trailing byte
  REQUIRE_THROWS_AS(decode_bytes(from_hex("0113"), arith_sig()), CodeError);        // unknown tag
  REQUIRE_THROWS_AS(decode_bytes(from_hex("0112000211001100"), arith_sig()), CodeError);  // S arity
  REQUIRE_THROWS_AS(decode_bytes(from_hex("021000"), arith_sig()), CodeError);      // wrong prefix
  REQUIRE_THROWS_AS(decode_bytes(from_hex("011107"), arith_sig()), CodeError);      // unknown constant
}

TEST_CASE("free variable bookkeeping") {
  Formula f = parse("∀v0 (v0=v1 ∧ v0=v3)");
  REQUIRE(free_vars(f) == std::vector<std::uint32_t>{1, 3});
  REQUIRE(!is_sentence(f));
  REQUIRE(is_sentence(parse("∀v0 v0=v0")));
}

TEST_CASE("set signature parse and print") {
  Formula f = parse("∀v0 ∃v1 v1∈v0", set_sig());
  REQUIRE(f == forall(exists(mem(var(0), var(1)))));
  REQUIRE(pretty(f, set_sig()) == "∀v0 ∃v1 v1∈v0");
  REQUIRE(decode(code(f), set_sig()) == f);
  REQUIRE_THROWS_AS(decode(code(f), arith_sig()), CodeError);  // ∈ unknown in arith
}
