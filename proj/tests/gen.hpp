#pragma once

// Deterministic random AST generator shared by the unit tests and the
// acceptance suite.

#include <random>
#include <string>

#include "godel/ast.hpp"
#include "godel/text.hpp"

namespace godel::testgen {

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  std::uint32_t pick(std::uint32_t n) { return std::uniform_int_distribution<std::uint32_t>(0, n - 1)(rng_); }

  Term term(std::uint32_t depth, std::uint32_t binders) {
    if (depth == 0) return leaf(binders);
    switch (pick(6)) {
      case 0:
      case 1:
        return leaf(binders);
      case 2:
        return succ(term(depth - 1, binders));
      case 3:
        return add(term(depth - 1, binders), term(depth - 1, binders));
      case 4:
        return mul(term(depth - 1, binders), term(depth - 1, binders));
      default:
        return numeral(static_cast<std::uint64_t>(pick(1000)));
    }
  }

  Formula formula(std::uint32_t depth, std::uint32_t binders) {
    if (depth == 0) return equal(term(1, binders), term(1, binders));
    switch (pick(8)) {
      case 0:
        return equal(term(depth - 1, binders), term(depth - 1, binders));
      case 1:
        return lnot(formula(depth - 1, binders));
      case 2:
        return land(formula(depth - 1, binders), formula(depth - 1, binders));
      case 3:
        return lor(formula(depth - 1, binders), formula(depth - 1, binders));
      case 4:
        return implies(formula(depth - 1, binders), formula(depth - 1, binders));
      case 5:
        return forall(formula(depth - 1, binders + 1));
      case 6:
        return exists(formula(depth - 1, binders + 1));
      default:
        return equal(term(depth - 1, binders), term(depth - 1, binders));
    }
  }

  // A pretty-printing with arbitrary (nonshadowing) binder names, producing an
  // alpha-variant text of f.
  std::string alpha_text(const Node* f) {
    std::uint32_t base = f->free_height + 1 + pick(5);
    std::string out;
    alpha_walk(f, 0, base, out);
    return out;
  }

 private:
  Term leaf(std::uint32_t binders) {
    std::uint32_t c = pick(4);
    if (c == 0) return zero();
    if (c <= 2 && binders > 0) return var(pick(binders));  // bound occurrence
    return var(binders + pick(3));                         // free variable 0..2
  }

  void alpha_walk(const Node* n, std::uint32_t depth, std::uint32_t base, std::string& out) {
    switch (n->tag) {
      case Tag::Numeral: {
        out += pretty(n);
        return;
      }
      case Tag::Variable:
        if (n->sym < depth)
          out += "v" + std::to_string(base + 2 * (depth - 1 - n->sym));
        else
          out += "v" + std::to_string(n->sym - depth);
        return;
      case Tag::Const:
        out += "0";
        return;
      case Tag::Apply:
        if (n->nkid == 1) {
          out += "S(";
          alpha_walk(n->kid[0], depth, base, out);
          out += ")";
        } else {
          out += "(";
          alpha_walk(n->kid[0], depth, base, out);
          out += n->sym == kFnAdd ? "+" : "*";
          alpha_walk(n->kid[1], depth, base, out);
          out += ")";
        }
        return;
      case Tag::Equal:
        alpha_walk(n->kid[0], depth, base, out);
        out += "=";
        alpha_walk(n->kid[1], depth, base, out);
        return;
      case Tag::Rel:
        alpha_walk(n->kid[0], depth, base, out);
        out += "∈";
        alpha_walk(n->kid[1], depth, base, out);
        return;
      case Tag::Not:
        out += "¬";
        alpha_walk(n->kid[0], depth, base, out);
        return;
      case Tag::And:
      case Tag::Or:
      case Tag::Implies:
        out += "(";
        alpha_walk(n->kid[0], depth, base, out);
        out += n->tag == Tag::And ? " ∧ " : n->tag == Tag::Or ? " ∨ " : " → ";
        alpha_walk(n->kid[1], depth, base, out);
        out += ")";
        return;
      case Tag::ForAll:
      case Tag::Exists:
        out += n->tag == Tag::ForAll ? "∀" : "∃";
        out += "v" + std::to_string(base + 2 * depth) + " ";
        alpha_walk(n->kid[0], depth + 1, base, out);
        return;
    }
  }

  std::mt19937_64 rng_;
};

}  // namespace godel::testgen
