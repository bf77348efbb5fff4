#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <gmpxx.h>

#include "godel/ast.hpp"
#include "godel/bytes.hpp"
#include "godel/sig.hpp"

namespace godel {

// A Godel code is the big-endian value of a prefixed byte string. The prefix
// byte separates the three code spaces; it also guarantees every code >= 256.
inline constexpr char kPrefixSyntax = 0x01;
inline constexpr char kPrefixProgram = 0x02;
inline constexpr char kPrefixProof = 0x03;

using GodelCode = mpz_class;

struct CodeError : std::runtime_error {
  explicit CodeError(const std::string& what) : std::runtime_error(what) {}
};

inline Bytes code_bytes(const Node* n) {
  Bytes out;
  out.reserve(n->byte_len + 1);
  out.push_back(kPrefixSyntax);
  serialize_node(n, [&](const char* p, std::size_t len) { out.append(p, len); });
  return out;
}

inline GodelCode code(const Node* n) { return bytes_to_value(code_bytes(n)); }

inline std::string code_hex(const Node* n) { return "0x" + to_hex(code_bytes(n)); }

inline std::string godel_hex(const GodelCode& c) { return "0x" + to_hex(value_to_bytes(c)); }

namespace detail {

struct Decoder {
  const Bytes& in;
  const Signature& sig;
  std::size_t pos = 1;  // past the prefix byte

  [[noreturn]] void fail(const std::string& why) const {
    throw CodeError("decode: " + why + " at byte " + std::to_string(pos));
  }

  std::uint8_t peek() const {
    if (pos >= in.size()) fail("truncated");
    return static_cast<std::uint8_t>(in[pos]);
  }

  std::uint64_t varint() {
    std::size_t p = pos;
    std::uint64_t v;
    try {
      v = get_varint(in, p);
    } catch (const std::exception& e) {
      fail(e.what());
    }
    pos = p;
    return v;
  }

  // Attempts to read a complete canonical numeral starting at pos. Returns
  // the folded/expanded term and advances, or returns nullptr untouched.
  // This keeps giant numerals iterative: their expanded tree is as deep as
  // twice their bit length.
  Term try_numeral() {
    static const Bytes kSHead = Bytes("\x12\x00\x01", 3);
    static const Bytes kMulSS0 = Bytes("\x12\x02\x02\x12\x00\x01\x12\x00\x01\x11\x00", 11);
    static const Bytes kSZero = Bytes("\x12\x00\x01\x11\x00", 5);
    std::size_t p = pos;
    auto match = [&](const Bytes& pat) {
      if (in.compare(p, pat.size(), pat) == 0) {
        p += pat.size();
        return true;
      }
      return false;
    };
    mpz_class v = 0;
    std::size_t nbits = 0;
    for (;;) {
      std::size_t mark = p;
      bool odd = match(kSHead);
      if (odd && match(kMulSS0)) {
        mpz_setbit(v.get_mpz_t(), nbits);
        nbits++;
        continue;
      }
      p = mark;
      if (!odd && match(kMulSS0)) {
        nbits++;
        continue;
      }
      p = mark;
      if (match(kSZero)) {
        mpz_setbit(v.get_mpz_t(), nbits);
        pos = p;
        return numeral(v);
      }
      // A bare (SS0)* chain that never closes with S(0) is not a numeral.
      return nullptr;
    }
  }

  Term term() {
    if (std::uint8_t b = peek(); b == static_cast<std::uint8_t>(Tag::Apply)) {
      if (Term t = try_numeral()) return t;
    }
    Tag tag = static_cast<Tag>(peek());
    pos++;
    switch (tag) {
      case Tag::Variable: {
        std::uint64_t idx = varint();
        if (idx > 0xffffffffull) fail("variable index out of range");
        return var(static_cast<std::uint32_t>(idx));
      }
      case Tag::Const: {
        std::uint64_t sym = varint();
        if (!sig.has_constant(static_cast<std::uint32_t>(sym))) fail("unknown constant symbol");
        return zero();
      }
      case Tag::Apply: {
        std::uint64_t sym = varint();
        std::uint64_t argc = varint();
        int arity;
        try {
          arity = sig.function_arity(static_cast<std::uint32_t>(sym));
        } catch (const std::exception&) {
          fail("unknown function symbol");
        }
        if (argc != static_cast<std::uint64_t>(arity)) fail("function arity mismatch");
        Term a = term();
        if (arity == 1) return detail::Arena::inst().intern(Tag::Apply, static_cast<std::uint32_t>(sym), a, nullptr);
        Term b = term();
        return detail::Arena::inst().intern(Tag::Apply, static_cast<std::uint32_t>(sym), a, b);
      }
      default:
        fail("expected a term tag");
    }
  }

  Formula formula() {
    Tag tag = static_cast<Tag>(peek());
    pos++;
    switch (tag) {
      case Tag::Equal: {
        Term a = term();
        Term b = term();
        return equal(a, b);
      }
      case Tag::Rel: {
        std::uint64_t sym = varint();
        std::uint64_t argc = varint();
        int arity;
        try {
          arity = sig.relation_arity(static_cast<std::uint32_t>(sym));
        } catch (const std::exception&) {
          fail("unknown relation symbol");
        }
        if (argc != static_cast<std::uint64_t>(arity)) fail("relation arity mismatch");
        Term a = term();
        Term b = term();
        return detail::Arena::inst().intern(Tag::Rel, static_cast<std::uint32_t>(sym), a, b);
      }
      case Tag::Not:
        return lnot(formula());
      case Tag::And: {
        Formula a = formula();
        return land(a, formula());
      }
      case Tag::Or: {
        Formula a = formula();
        return lor(a, formula());
      }
      case Tag::Implies: {
        Formula a = formula();
        return implies(a, formula());
      }
      case Tag::ForAll:
        return forall(formula());
      case Tag::Exists:
        return exists(formula());
      default:
        fail("expected a formula tag");
    }
  }
};

}  // namespace detail

// Decodes a prefixed byte string to a term or formula; rejects everything the
// tag grammar does not force, including trailing bytes.
inline const Node* decode_bytes(const Bytes& b, const Signature& sig) {
  if (b.size() < 2 || b[0] != kPrefixSyntax) throw CodeError("decode: malformed code (bad prefix)");
  detail::Decoder d{b, sig};
  std::uint8_t t = d.peek();
  const Node* n = is_formula_tag(static_cast<Tag>(t)) ? d.formula() : d.term();
  if (d.pos != b.size()) throw CodeError("decode: trailing bytes");
  return n;
}

inline const Node* decode(const GodelCode& c, const Signature& sig) {
  if (c < 256) throw CodeError("decode: malformed code (below minimum)");
  return decode_bytes(value_to_bytes(c), sig);
}

}  // namespace godel
