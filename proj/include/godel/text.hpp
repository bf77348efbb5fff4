#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "godel/ast.hpp"
#include "godel/sig.hpp"

namespace godel {

struct ParseError : std::runtime_error {
  std::size_t offset;
  ParseError(const std::string& what, std::size_t off)
      : std::runtime_error(what + " at offset " + std::to_string(off)), offset(off) {}
};

namespace detail {

// Canonical output: binary operators always parenthesized, unary prefix bare.
// Bound variables are named by binder depth above the free-variable names, so
// output never shadows and reparsing is exact.
struct Printer {
  const Signature& sig;
  std::uint32_t base;  // first binder name index = max free id + 1
  std::string out;

  void numeral_leaf(const mpz_class& v) {
    std::size_t bits = mpz_sizeinbase(v.get_mpz_t(), 2);
    std::size_t closes = 0;
    for (std::size_t j = 0; j + 1 < bits; j++) {
      if (mpz_tstbit(v.get_mpz_t(), j)) {
        out += "S(";
        closes++;
      }
      out += "(S(S(0))*";
      closes++;
    }
    out += "S(0)";
    out.append(closes, ')');
  }

  void term(const Node* n, std::uint32_t depth) {
    switch (n->tag) {
      case Tag::Numeral:
        numeral_leaf(*n->num);
        return;
      case Tag::Variable: {
        std::uint32_t name = n->sym < depth ? base + (depth - 1 - n->sym) : n->sym - depth;
        out += "v" + std::to_string(name);
        return;
      }
      case Tag::Const:
        out += sig.constants.at(n->sym);
        return;
      case Tag::Apply:
        if (n->nkid == 1) {
          out += sig.functions.at(n->sym).first;
          out += "(";
          term(n->kid[0], depth);
          out += ")";
        } else {
          out += "(";
          term(n->kid[0], depth);
          out += sig.functions.at(n->sym).first;
          term(n->kid[1], depth);
          out += ")";
        }
        return;
      default:
        throw std::runtime_error("pretty: not a term");
    }
  }

  void formula(const Node* n, std::uint32_t depth) {
    switch (n->tag) {
      case Tag::Equal:
        term(n->kid[0], depth);
        out += "=";
        term(n->kid[1], depth);
        return;
      case Tag::Rel:
        term(n->kid[0], depth);
        out += sig.relations.at(n->sym).first;
        term(n->kid[1], depth);
        return;
      case Tag::Not:
        out += "¬";
        formula(n->kid[0], depth);
        return;
      case Tag::And:
      case Tag::Or:
      case Tag::Implies:
        out += "(";
        formula(n->kid[0], depth);
        out += n->tag == Tag::And ? " ∧ " : n->tag == Tag::Or ? " ∨ " : " → ";
        formula(n->kid[1], depth);
        out += ")";
        return;
      case Tag::ForAll:
      case Tag::Exists:
        out += n->tag == Tag::ForAll ? "∀" : "∃";
        out += "v" + std::to_string(base + depth) + " ";
        formula(n->kid[0], depth + 1);
        return;
      default:
        throw std::runtime_error("pretty: not a formula");
    }
  }
};

struct Lexer {
  const std::string& s;
  std::size_t pos = 0;

  void skip_ws() {
    while (pos < s.size() && (s[pos] == ' ' || s[pos] == '\t' || s[pos] == '\n' || s[pos] == '\r'))
      pos++;
  }

  bool eat(const char* lit) {
    skip_ws();
    std::size_t n = std::char_traits<char>::length(lit);
    if (s.compare(pos, n, lit) == 0) {
      pos += n;
      return true;
    }
    return false;
  }

  bool peek_is(const char* lit) {
    skip_ws();
    return s.compare(pos, std::char_traits<char>::length(lit), lit) == 0;
  }

  bool eof() {
    skip_ws();
    return pos >= s.size();
  }

  [[noreturn]] void fail(const std::string& why) { throw ParseError("syntax error: " + why, pos); }

  std::uint64_t decimal() {
    skip_ws();
    if (pos >= s.size() || !isdigit(static_cast<unsigned char>(s[pos]))) fail("expected a number");
    std::uint64_t v = 0;
    while (pos < s.size() && isdigit(static_cast<unsigned char>(s[pos]))) {
      if (v > (UINT64_MAX - 9) / 10) fail("numeric literal too large");
      v = v * 10 + static_cast<std::uint64_t>(s[pos] - '0');
      pos++;
    }
    return v;
  }
};

struct Parser {
  Lexer lx;
  const Signature& sig;
  std::vector<std::uint32_t> bound;  // binder names, innermost last

  const Node* resolve_var(std::uint64_t name) {
    for (std::size_t i = bound.size(); i-- > 0;)
      if (bound[i] == name) return var(static_cast<std::uint32_t>(bound.size() - 1 - i));
    // free occurrence: name n denotes free variable n regardless of depth
    return var(static_cast<std::uint32_t>(bound.size() + name));
  }

  // Symbol lookup by declared name; the two built-in signatures keep these
  // tables tiny so a scan is fine.
  bool try_function(std::uint32_t* sym, int* arity) {
    for (std::uint32_t i = 0; i < sig.functions.size(); i++) {
      if (sig.functions[i].second == 1 && lx.eat(sig.functions[i].first.c_str())) {
        *sym = i;
        *arity = 1;
        return true;
      }
    }
    return false;
  }

  const Node* parse_unit() {
    lx.skip_ws();
    if (lx.eof()) lx.fail("unexpected end of input");
    if (lx.eat("∀")) return binder(true);
    if (lx.eat("∃")) return binder(false);
    if (lx.eat("¬")) {
      const Node* f = parse_any();
      if (!is_formula_tag(f->tag)) lx.fail("¬ needs a formula");
      return lnot(f);
    }
    if (lx.eat("(")) {
      const Node* a = parse_any();
      if (is_term_tag(a->tag)) {
        std::uint32_t op;
        if (lx.eat("+")) op = kFnAdd;
        else if (lx.eat("*")) op = kFnMul;
        else lx.fail("expected + or * inside term parentheses");
        const Node* b = parse_any();
        if (!is_term_tag(b->tag)) lx.fail("operand must be a term");
        if (!lx.eat(")")) lx.fail("expected )");
        return op == kFnAdd ? add(a, b) : mul(a, b);
      }
      Tag t;
      if (lx.eat("∧")) t = Tag::And;
      else if (lx.eat("∨")) t = Tag::Or;
      else if (lx.eat("→")) t = Tag::Implies;
      else lx.fail("expected a connective");
      const Node* b = parse_any();
      if (!is_formula_tag(b->tag)) lx.fail("operand must be a formula");
      if (!lx.eat(")")) lx.fail("expected )");
      return t == Tag::And ? land(a, b) : t == Tag::Or ? lor(a, b) : implies(a, b);
    }
    if (lx.eat("numeral")) {
      if (!lx.eat("(")) lx.fail("expected ( after numeral");
      std::uint64_t v = lx.decimal();
      if (!lx.eat(")")) lx.fail("expected )");
      return numeral(v);
    }
    if (lx.peek_is("v") ) {
      lx.eat("v");
      return resolve_var(lx.decimal());
    }
    std::uint32_t sym;
    int arity;
    if (try_function(&sym, &arity)) {
      if (!lx.eat("(")) lx.fail("expected ( after function symbol");
      const Node* a = parse_any();
      if (!is_term_tag(a->tag)) lx.fail("argument must be a term");
      if (!lx.eat(")")) lx.fail("expected )");
      return detail::Arena::inst().intern(Tag::Apply, sym, a, nullptr);
    }
    for (std::uint32_t i = 0; i < sig.constants.size(); i++)
      if (isdigit(static_cast<unsigned char>(sig.constants[i][0])) ? false
                                                                   : lx.eat(sig.constants[i].c_str()))
        return detail::Arena::inst().intern(Tag::Const, i, nullptr, nullptr);
    lx.skip_ws();
    if (lx.pos < lx.s.size() && isdigit(static_cast<unsigned char>(lx.s[lx.pos])))
      return numeral(lx.decimal());
    lx.fail("unknown symbol");
  }

  const Node* binder(bool universal) {
    if (!lx.eat("v")) lx.fail("expected a variable after quantifier");
    std::uint64_t name = lx.decimal();
    bound.push_back(static_cast<std::uint32_t>(name));
    const Node* body = parse_any();
    bound.pop_back();
    if (!is_formula_tag(body->tag)) lx.fail("quantifier needs a formula body");
    return universal ? forall(body) : exists(body);
  }

  // A unit, then at most one infix atom relation if the unit was a term.
  const Node* parse_any() {
    const Node* x = parse_unit();
    if (is_term_tag(x->tag)) {
      bool eq = lx.eat("=");
      bool in = !eq && lx.eat("∈");
      if (eq || in) {
        const Node* y = parse_unit();
        if (!is_term_tag(y->tag)) lx.fail("right side must be a term");
        if (in && sig.relations.empty()) lx.fail("∈ not in this signature");
        return eq ? equal(x, y) : mem(x, y);
      }
    }
    return x;
  }
};

}  // namespace detail

inline std::string pretty(const Node* n, const Signature& sig = arith_sig()) {
  detail::Printer p{sig, n->free_height, {}};
  if (is_formula_tag(n->tag)) p.formula(n, 0);
  else p.term(n, 0);
  return p.out;
}

inline Formula parse(const std::string& text, const Signature& sig = arith_sig()) {
  detail::Parser p{{text}, sig, {}};
  const Node* n = p.parse_any();
  if (!p.lx.eof()) p.lx.fail("trailing input");
  if (!is_formula_tag(n->tag)) p.lx.fail("expected a formula, found a term");
  return n;
}

inline Term parse_term(const std::string& text, const Signature& sig = arith_sig()) {
  detail::Parser p{{text}, sig, {}};
  const Node* n = p.parse_any();
  if (!p.lx.eof()) p.lx.fail("trailing input");
  if (!is_term_tag(n->tag)) p.lx.fail("expected a term, found a formula");
  return n;
}

}  // namespace godel
