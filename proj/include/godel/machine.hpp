#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <gmpxx.h>

#include "godel/bytes.hpp"
#include "godel/coding.hpp"

namespace godel {

// Register machine: Inc(r), DecJz(r, target), Halt. Inputs arrive in r1..rk,
// output is r0. A run halts when it executes Halt or falls off the end.
enum class Op : std::uint8_t { Halt = 0, Inc = 1, DecJz = 2 };

struct Instr {
  Op op = Op::Halt;
  std::uint32_t reg = 0;
  std::uint32_t target = 0;

  bool operator==(const Instr&) const = default;
};

struct Program {
  std::vector<Instr> ins;

  bool operator==(const Program&) const = default;
};

inline Instr inc(std::uint32_t r) { return {Op::Inc, r, 0}; }
inline Instr decjz(std::uint32_t r, std::uint32_t target) { return {Op::DecJz, r, target}; }
inline Instr halt() { return {Op::Halt, 0, 0}; }

inline void validate(const Program& p) {
  for (const Instr& i : p.ins)
    if (i.op == Op::DecJz && i.target > p.ins.size())
      throw std::runtime_error("program: jump target out of bounds");
}

// ---- Gödel coding of programs (prefix 0x02) ----
// varint instruction count, then one record per instruction:
//   00 Halt | 01 Inc varint(reg) | 02 DecJz varint(reg) varint(target)

inline Bytes program_bytes(const Program& p) {
  Bytes out;
  out.push_back(kPrefixProgram);
  put_varint(out, p.ins.size());
  for (const Instr& i : p.ins) {
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

inline GodelCode program_code(const Program& p) { return bytes_to_value(program_bytes(p)); }

inline Program program_from_bytes(const Bytes& b) {
  if (b.empty() || b[0] != kPrefixProgram) throw CodeError("program decode: bad prefix");
  std::size_t pos = 1;
  std::uint64_t n = get_varint(b, pos);
  Program p;
  p.ins.reserve(n);
  for (std::uint64_t k = 0; k < n; k++) {
    if (pos >= b.size()) throw CodeError("program decode: truncated");
    std::uint8_t op = static_cast<std::uint8_t>(b[pos++]);
    Instr i;
    switch (op) {
      case 0:
        i = halt();
        break;
      case 1:
        i.op = Op::Inc;
        i.reg = static_cast<std::uint32_t>(get_varint(b, pos));
        break;
      case 2:
        i.op = Op::DecJz;
        i.reg = static_cast<std::uint32_t>(get_varint(b, pos));
        i.target = static_cast<std::uint32_t>(get_varint(b, pos));
        break;
      default:
        throw CodeError("program decode: bad opcode");
    }
    p.ins.push_back(i);
  }
  if (pos != b.size()) throw CodeError("program decode: trailing bytes");
  validate(p);
  return p;
}

inline Program program_decode(const GodelCode& c) { return program_from_bytes(value_to_bytes(c)); }

// ---- text format: `INC r`, `DECJZ r L`, `HALT`, labels `Ln:` ----

inline std::string program_text(const Program& p) {
  std::ostringstream os;
  std::vector<bool> labeled(p.ins.size() + 1, false);
  for (const Instr& i : p.ins)
    if (i.op == Op::DecJz) labeled[i.target] = true;
  for (std::size_t k = 0; k <= p.ins.size(); k++) {
    if (labeled[k]) os << "L" << k << ":\n";
    if (k == p.ins.size()) break;
    const Instr& i = p.ins[k];
    switch (i.op) {
      case Op::Halt:
        os << "HALT\n";
        break;
      case Op::Inc:
        os << "INC r" << i.reg << "\n";
        break;
      case Op::DecJz:
        os << "DECJZ r" << i.reg << " L" << i.target << "\n";
        break;
    }
  }
  return os.str();
}

inline Program program_parse(const std::string& text) {
  // two passes: collect label positions, then assemble
  std::map<std::string, std::uint32_t> labels;
  std::vector<std::vector<std::string>> lines;
  std::istringstream is(text);
  std::string line;
  std::uint32_t at = 0;
  auto tokens = [](const std::string& l) {
    std::vector<std::string> t;
    std::istringstream ls(l);
    std::string w;
    while (ls >> w) t.push_back(w);
    return t;
  };
  std::vector<std::vector<std::string>> raw;
  while (std::getline(is, line)) {
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    auto t = tokens(line);
    if (t.empty()) continue;
    raw.push_back(t);
  }
  for (auto& t : raw) {
    if (t.size() == 1 && t[0].back() == ':') {
      labels[t[0].substr(0, t[0].size() - 1)] = at;
    } else {
      at++;
    }
  }
  Program p;
  auto reg = [](const std::string& w) -> std::uint32_t {
    if (w.size() < 2 || w[0] != 'r') throw std::runtime_error("program parse: expected register, got " + w);
    return static_cast<std::uint32_t>(std::stoul(w.substr(1)));
  };
  for (auto& t : raw) {
    if (t.size() == 1 && t[0].back() == ':') continue;
    if (t[0] == "HALT" && t.size() == 1) {
      p.ins.push_back(halt());
    } else if (t[0] == "INC" && t.size() == 2) {
      p.ins.push_back(inc(reg(t[1])));
    } else if (t[0] == "DECJZ" && t.size() == 3) {
      auto it = labels.find(t[2]);
      if (it == labels.end()) throw std::runtime_error("program parse: unknown label " + t[2]);
      p.ins.push_back(decjz(reg(t[1]), it->second));
    } else {
      throw std::runtime_error("program parse: bad line starting " + t[0]);
    }
  }
  validate(p);
  return p;
}

// ---- register values ----
// Registers hold naturals that can reach hundreds of megabytes (byte strings
// are built digit by digit as r*256+b). The hybrid below keeps the three hot
// access patterns O(1) amortized: counting, base-256 append/pop, base-2 pop.

class RVal {
 public:
  RVal() : rep_(Rep::Small), small_(0) {}
  RVal(std::uint64_t v) : rep_(Rep::Small), small_(v) {}
  RVal(const mpz_class& v) { *this = from_mpz(v); }

  static RVal from_mpz(const mpz_class& v) {
    RVal r;
    if (v < 0) throw std::runtime_error("RVal: negative");
    if (mpz_fits_ulong_p(v.get_mpz_t())) {
      r.rep_ = Rep::Small;
      r.small_ = mpz_get_ui(v.get_mpz_t());
    } else {
      r.rep_ = Rep::Bytes;
      r.bytes_ = value_to_bytes(v);
    }
    return r;
  }

  static RVal from_bytes(Bytes b) {
    while (!b.empty() && b[0] == 0) b.erase(0, 1);
    RVal r;
    if (b.size() <= 8) return RVal(bytes_to_value(b).get_ui());
    r.rep_ = Rep::Bytes;
    r.bytes_ = std::move(b);
    return r;
  }

  bool is_zero() const {
    switch (rep_) {
      case Rep::Small: return small_ == 0;
      case Rep::Bytes: return bytes_.empty();
      case Rep::Bits: return bits_.empty();
    }
    return true;
  }

  void inc() {
    switch (rep_) {
      case Rep::Small:
        if (small_ == UINT64_MAX) {
          to_bytes();
          inc();
        } else {
          small_++;
        }
        return;
      case Rep::Bytes: {
        std::size_t i = bytes_.size();
        while (i > 0) {
          std::uint8_t d = static_cast<std::uint8_t>(bytes_[i - 1]);
          if (d != 0xff) {
            bytes_[i - 1] = static_cast<char>(d + 1);
            return;
          }
          bytes_[i - 1] = 0;
          i--;
        }
        bytes_.insert(bytes_.begin(), 1);
        return;
      }
      case Rep::Bits: {
        std::size_t i = bits_.size();
        while (i > 0) {
          if (!bits_[i - 1]) {
            bits_[i - 1] = true;
            return;
          }
          bits_[i - 1] = false;
          i--;
        }
        bits_.insert(bits_.begin(), true);
        return;
      }
    }
  }

  // Decrement; caller must ensure nonzero.
  void dec() {
    switch (rep_) {
      case Rep::Small:
        small_--;
        return;
      case Rep::Bytes: {
        std::size_t i = bytes_.size();
        while (i > 0) {
          std::uint8_t d = static_cast<std::uint8_t>(bytes_[i - 1]);
          if (d != 0) {
            bytes_[i - 1] = static_cast<char>(d - 1);
            break;
          }
          bytes_[i - 1] = static_cast<char>(0xff);
          i--;
        }
        if (!bytes_.empty() && bytes_[0] == 0) bytes_.erase(0, 1);
        if (bytes_.size() <= 8) shrink();
        return;
      }
      case Rep::Bits: {
        std::size_t i = bits_.size();
        while (i > 0) {
          if (bits_[i - 1]) {
            bits_[i - 1] = false;
            break;
          }
          bits_[i - 1] = true;
          i--;
        }
        if (!bits_.empty() && !bits_[0]) bits_.erase(bits_.begin());
        if (bits_.size() <= 64) shrink();
        return;
      }
    }
  }

  // r := r*256 + d
  void mul256_add(std::uint8_t d) {
    if (rep_ == Rep::Small && small_ <= (UINT64_MAX >> 8)) {
      small_ = (small_ << 8) | d;
      return;
    }
    to_bytes();
    if (bytes_.empty() && d == 0) return;
    bytes_.push_back(static_cast<char>(d));
  }

  // (r, returned) := (r div 256, r mod 256)
  std::uint8_t divmod256() {
    if (rep_ == Rep::Small) {
      std::uint8_t d = static_cast<std::uint8_t>(small_ & 0xff);
      small_ >>= 8;
      return d;
    }
    to_bytes();
    if (bytes_.empty()) return 0;
    std::uint8_t d = static_cast<std::uint8_t>(bytes_.back());
    bytes_.pop_back();
    if (bytes_.size() <= 8) shrink();
    return d;
  }

  // r := r*2 + bit
  void mul2_add(bool bit) {
    if (rep_ == Rep::Small && small_ <= (UINT64_MAX >> 1)) {
      small_ = (small_ << 1) | (bit ? 1 : 0);
      return;
    }
    to_bits();
    if (bits_.empty() && !bit) return;
    bits_.push_back(bit);
  }

  // (r, returned) := (r div 2, r mod 2)
  bool divmod2() {
    if (rep_ == Rep::Small) {
      bool b = small_ & 1;
      small_ >>= 1;
      return b;
    }
    to_bits();
    if (bits_.empty()) return false;
    bool b = bits_.back();
    bits_.pop_back();
    if (bits_.size() <= 64) shrink();
    return b;
  }

  void add(const mpz_class& v) {
    mpz_class r = to_mpz() + v;
    *this = from_mpz(r);
  }

  // Subtract min(v, *this) (natural subtraction); returns amount subtracted.
  mpz_class sub_clamped(const mpz_class& v) {
    mpz_class cur = to_mpz();
    if (cur >= v) {
      *this = from_mpz(cur - v);
      return v;
    }
    *this = RVal();
    return cur;
  }

  mpz_class to_mpz() const {
    switch (rep_) {
      case Rep::Small:
        return mpz_class(static_cast<unsigned long>(small_));
      case Rep::Bytes:
        return bytes_to_value(bytes_);
      case Rep::Bits: {
        mpz_class v = 0;
        for (bool b : bits_) {
          v <<= 1;
          if (b) v |= 1;
        }
        return v;
      }
    }
    return 0;
  }

  // Big-endian digits, empty for zero.
  Bytes to_byte_string() const {
    switch (rep_) {
      case Rep::Small:
        return value_to_bytes(mpz_class(static_cast<unsigned long>(small_)));
      case Rep::Bytes:
        return bytes_;
      case Rep::Bits:
        return value_to_bytes(to_mpz());
    }
    return {};
  }

  std::size_t approx_bytes() const {
    switch (rep_) {
      case Rep::Small: return 8;
      case Rep::Bytes: return bytes_.size();
      case Rep::Bits: return bits_.size() / 8 + 1;
    }
    return 0;
  }

  bool fits_u64() const { return rep_ == Rep::Small; }
  std::uint64_t u64() const {
    if (rep_ != Rep::Small) throw std::runtime_error("RVal: not small");
    return small_;
  }

  bool operator==(const RVal& o) const {
    if (rep_ == Rep::Small && o.rep_ == Rep::Small) return small_ == o.small_;
    return to_mpz() == o.to_mpz();
  }

 private:
  enum class Rep { Small, Bytes, Bits };

  void to_bytes() {
    if (rep_ == Rep::Bytes) return;
    bytes_ = value_to_bytes(to_mpz());
    bits_.clear();
    rep_ = Rep::Bytes;
  }

  void to_bits() {
    if (rep_ == Rep::Bits) return;
    mpz_class v = to_mpz();
    std::size_t n = v == 0 ? 0 : mpz_sizeinbase(v.get_mpz_t(), 2);
    bits_.clear();
    bits_.reserve(n);
    for (std::size_t i = n; i-- > 0;) bits_.push_back(mpz_tstbit(v.get_mpz_t(), i));
    bytes_.clear();
    rep_ = Rep::Bits;
  }

  void shrink() {
    mpz_class v = to_mpz();
    if (mpz_fits_ulong_p(v.get_mpz_t())) {
      rep_ = Rep::Small;
      small_ = mpz_get_ui(v.get_mpz_t());
      bytes_.clear();
      bits_.clear();
    }
  }

  Rep rep_;
  std::uint64_t small_ = 0;
  Bytes bytes_;
  std::vector<bool> bits_;
};

struct Config {
  std::uint32_t pc = 0;
  std::vector<RVal> regs;

  RVal& reg(std::uint32_t r) {
    if (r >= regs.size()) regs.resize(r + 1);
    return regs[r];
  }
};

struct RunResult {
  bool halted = false;
  mpz_class output;  // r0 when halted
  mpz_class time;    // executed instructions
  Config config;     // final configuration (also for OutOfFuel)
};

// Fuel: -1 means unbounded.
inline const mpz_class kNoFuel{-1};

namespace detail {

// Exact acceleration of simple cycles. When control returns to the current pc
// along a path whose every branch outcome is forced by the current register
// values, the iteration's net effect is affine; the number of repeats before
// any test first changes its outcome has a closed form.
struct CycleAccel {
  struct Test {
    std::uint32_t reg;
    std::int64_t delta_at_test;  // running delta on reg when tested
    bool nonzero;                // branch taken during the trace
  };
  std::vector<Test> tests;
  std::map<std::uint32_t, std::int64_t> delta;  // net per-iteration register delta
  std::uint64_t len = 0;                        // instructions per iteration
};

}  // namespace detail

class Machine {
 public:
  // One small step; returns false if already halted (pc at Halt or past end).
  static bool step(const Program& p, Config& c) {
    if (c.pc >= p.ins.size()) return false;
    const Instr& i = p.ins[c.pc];
    switch (i.op) {
      case Op::Halt:
        return false;
      case Op::Inc:
        c.reg(i.reg).inc();
        c.pc++;
        return true;
      case Op::DecJz:
        if (c.reg(i.reg).is_zero()) {
          c.pc = i.target;
        } else {
          c.reg(i.reg).dec();
          c.pc++;
        }
        return true;
    }
    return false;
  }

  static bool is_halted(const Program& p, const Config& c) {
    return c.pc >= p.ins.size() || p.ins[c.pc].op == Op::Halt;
  }
};

inline bool accel_cycle(const Program& p, Config& c, bool bounded, mpz_class& left, mpz_class& time);

// Plain small-step run with optional exact cycle acceleration (default on;
// differential tests run both). Executing Halt costs one step.
inline RunResult run_config(const Program& p, Config c, const mpz_class& fuel, bool accelerate = true) {
  validate(p);
  RunResult res;
  mpz_class time = 0;
  bool bounded = fuel >= 0;
  mpz_class left = fuel;
  std::uint64_t sincecheck = 0;

  auto charge = [&](const mpz_class& n) {
    time += n;
    if (bounded) left -= n;
  };

  while (true) {
    if (c.pc >= p.ins.size()) {
      res.halted = true;
      break;
    }
    const Instr& ins = p.ins[c.pc];
    if (ins.op == Op::Halt) {
      if (bounded && left < 1) break;  // no fuel to execute the Halt
      charge(1);
      res.halted = true;
      break;
    }
    if (bounded && left < 1) break;

    if (accelerate && ins.op == Op::DecJz && !c.reg(ins.reg).is_zero() && ++sincecheck >= 32) {
      sincecheck = 0;
      if (accel_cycle(p, c, bounded, left, time)) continue;
    }

    if (ins.op == Op::Inc) {
      c.reg(ins.reg).inc();
      c.pc++;
    } else {
      if (c.reg(ins.reg).is_zero()) {
        c.pc = ins.target;
      } else {
        c.reg(ins.reg).dec();
        c.pc++;
      }
    }
    charge(1);
  }

  res.time = time;
  if (res.halted) res.output = c.regs.empty() ? mpz_class(0) : c.regs[0].to_mpz();
  res.config = std::move(c);
  return res;
}

inline RunResult run(const Program& p, const std::vector<mpz_class>& inputs, const mpz_class& fuel,
                     bool accelerate = true) {
  Config c;
  for (std::size_t i = 0; i < inputs.size(); i++) c.reg(static_cast<std::uint32_t>(i + 1)) = RVal::from_mpz(inputs[i]);
  return run_config(p, std::move(c), fuel, accelerate);
}

inline RunResult run(const Program& p, const std::vector<std::uint64_t>& inputs, std::uint64_t fuel,
                     bool accelerate = true) {
  std::vector<mpz_class> in;
  for (auto v : inputs) in.push_back(mpz_class(static_cast<unsigned long>(v)));
  return run(p, in, mpz_class(static_cast<unsigned long>(fuel)), accelerate);
}

namespace detail {

// Walks from c.pc following branches forced by the current register values
// until it revisits c.pc (cycle found) or hits Halt/end/length cap. The
// registers are not mutated; running deltas stand in for execution. A big
// register (beyond 64 bits) cannot reach zero within the 512-step cap, so its
// tests are forced nonzero without materializing the value.
inline bool trace_cycle(const Program& p, Config& c, CycleAccel& out) {
  std::uint32_t pc = c.pc;
  out.tests.clear();
  out.delta.clear();
  out.len = 0;
  for (;;) {
    if (pc >= p.ins.size()) return false;
    const Instr& ins = p.ins[pc];
    if (ins.op == Op::Halt) return false;
    if (ins.op == Op::Inc) {
      out.delta[ins.reg]++;
      out.len++;
      pc++;
    } else {
      std::int64_t d = out.delta.count(ins.reg) ? out.delta[ins.reg] : 0;
      RVal& rv = c.reg(ins.reg);
      bool nonzero;
      if (rv.fits_u64()) {
        __int128 cur = static_cast<__int128>(rv.u64()) + d;
        if (cur < 0) return false;  // inconsistent trace; bail
        nonzero = cur > 0;
      } else {
        nonzero = true;  // |delta| <= 512 cannot zero a 2^64-sized value
      }
      out.tests.push_back({ins.reg, d, nonzero});
      if (nonzero) {
        out.delta[ins.reg]--;
        pc++;
      } else {
        pc = ins.target;
      }
      out.len++;
    }
    if (out.len > 512) return false;
    if (pc == c.pc) return true;
  }
}

}  // namespace detail

// Attempts one closed-form advance over a simple cycle at c.pc. Returns true
// if it advanced (time/fuel updated), leaving c at the start of the first
// iteration not taken. Registers touched here can be hundreds of kilobytes,
// so each one is converted to mpz at most once and written back at most once.
inline bool accel_cycle(const Program& p, Config& c, bool bounded, mpz_class& left, mpz_class& time) {
  detail::CycleAccel cyc;
  if (!detail::trace_cycle(p, c, cyc)) return false;

  std::map<std::uint32_t, mpz_class> vals;
  auto val = [&](std::uint32_t r) -> mpz_class& {
    auto it = vals.find(r);
    if (it == vals.end()) it = vals.emplace(r, c.reg(r).to_mpz()).first;
    return it->second;
  };

  // The traced path is iteration i=0; it repeats identically for i < I where
  // each nonzero test (r,d) needs v_r + i*net_r + d >= 1 and each zero test
  // needs v_r + i*net_r + d == 0 (so net_r must be 0; i=0 already holds).
  mpz_class I = -1;  // -1 = unbounded
  for (auto& t : cyc.tests) {
    std::int64_t net = cyc.delta.count(t.reg) ? cyc.delta[t.reg] : 0;
    if (t.nonzero) {
      if (net >= 0) continue;
      mpz_class num = val(t.reg) + t.delta_at_test - 1;
      if (num < 0) num = 0;
      mpz_class bound = num / mpz_class(static_cast<long>(-net)) + 1;
      if (I < 0 || bound < I) I = bound;
    } else if (net != 0) {
      I = 1;
    }
  }

  if (I < 0) {
    if (!bounded) return false;  // genuine divergence; caller chose no fuel
    I = left / cyc.len;
  } else if (bounded) {
    mpz_class byfuel = left / cyc.len;
    if (byfuel < I) I = byfuel;
  }
  if (I <= 0) return false;

  for (auto& [r, net] : cyc.delta) {
    if (net == 0) continue;
    mpz_class& v = val(r);
    v += I * net;
    if (v < 0) throw std::logic_error("cycle acceleration underflow");
  }
  for (auto& [r, net] : cyc.delta) {
    if (net == 0) continue;
    c.reg(r) = RVal::from_mpz(vals.at(r));
  }
  mpz_class cost = I * cyc.len;
  time += cost;
  if (bounded) left -= cost;
  return true;
}

}  // namespace godel
