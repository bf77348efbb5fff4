#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace godel {

struct Signature {
  std::string name;
  std::vector<std::string> constants;                       // index = constant symbol
  std::vector<std::pair<std::string, int>> functions;       // index = function symbol
  std::vector<std::pair<std::string, int>> relations;       // index = relation symbol

  int function_arity(std::uint32_t sym) const {
    if (sym >= functions.size()) throw std::runtime_error(name + ": unknown function symbol");
    return functions[sym].second;
  }
  int relation_arity(std::uint32_t sym) const {
    if (sym >= relations.size()) throw std::runtime_error(name + ": unknown relation symbol");
    return relations[sym].second;
  }
  bool has_constant(std::uint32_t sym) const { return sym < constants.size(); }
};

inline const Signature& arith_sig() {
  static const Signature s{"arith", {"0"}, {{"S", 1}, {"+", 2}, {"*", 2}}, {}};
  return s;
}

inline const Signature& set_sig() {
  static const Signature s{"set", {}, {}, {{"∈", 2}}};
  return s;
}

inline const Signature& signature_by_name(const std::string& n) {
  if (n == "arith") return arith_sig();
  if (n == "set") return set_sig();
  throw std::runtime_error("unknown signature: " + n);
}

}  // namespace godel
