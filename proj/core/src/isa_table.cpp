// Supported x86-64 subset. docs/opcode-table.md mirrors this list.

#include <map>

#include "ellf/isa.hpp"

namespace ellf::isa {

namespace {

constexpr std::array<std::string_view, 16> kNames64 = {"rax", "rcx", "rdx", "rbx", "rsp", "rbp", "rsi", "rdi",
                                                       "r8",  "r9",  "r10", "r11", "r12", "r13", "r14", "r15"};
constexpr std::array<std::string_view, 16> kNames32 = {"eax", "ecx", "edx",  "ebx",  "esp",  "ebp",  "esi",  "edi",
                                                       "r8d", "r9d", "r10d", "r11d", "r12d", "r13d", "r14d", "r15d"};

constexpr std::array<std::string_view, 16> kConditions = {"o", "no", "b",  "ae", "e", "ne", "be", "a",
                                                          "s", "ns", "p",  "np", "l", "ge", "le", "g"};

struct AluOp {
  std::string_view name;
  std::uint8_t base;
  std::uint8_t digit;
};

constexpr std::array<AluOp, 6> kAlu = {{{"add", 0x00, 0},
                                        {"or", 0x08, 1},
                                        {"and", 0x20, 4},
                                        {"sub", 0x28, 5},
                                        {"xor", 0x30, 6},
                                        {"cmp", 0x38, 7}}};

Form make(std::string_view mn, std::initializer_list<OpKind> ops, std::initializer_list<std::uint8_t> opcode,
          Encoding enc, std::uint8_t digit = 0, bool rex_w = false, std::uint8_t imm = 0, bool decode_only = false) {
  Form f;
  f.mnemonic = mn;
  f.arity = static_cast<std::uint8_t>(ops.size());
  std::copy(ops.begin(), ops.end(), f.ops.begin());
  f.opcode_len = static_cast<std::uint8_t>(opcode.size());
  std::copy(opcode.begin(), opcode.end(), f.opcode.begin());
  f.enc = enc;
  f.digit = digit;
  f.rex_w = rex_w;
  f.imm_bytes = imm;
  f.decode_only = decode_only;
  return f;
}

std::vector<Form> build_forms() {
  using K = OpKind;
  using E = Encoding;
  std::vector<Form> t;

  struct Width {
    bool w;
    K r, rm, m;
  };
  const std::array<Width, 2> widths = {{{true, K::R64, K::RM64, K::M64}, {false, K::R32, K::RM32, K::M32}}};

  for (const auto& [w, r, rm, m] : widths) {
    for (const auto& alu : kAlu) {
      t.push_back(make(alu.name, {rm, r}, {static_cast<std::uint8_t>(alu.base + 1)}, E::MR, 0, w));
      t.push_back(make(alu.name, {r, m}, {static_cast<std::uint8_t>(alu.base + 3)}, E::RM, 0, w));
      t.push_back(make(alu.name, {rm, K::I8}, {0x83}, E::MI, alu.digit, w, 1));
      t.push_back(make(alu.name, {rm, K::I32}, {0x81}, E::MI, alu.digit, w, 4));
    }

    t.push_back(make("mov", {rm, r}, {0x89}, E::MR, 0, w));
    t.push_back(make("mov", {r, m}, {0x8B}, E::RM, 0, w));
    if (w) {
      t.push_back(make("mov", {rm, K::I32}, {0xC7}, E::MI, 0, true, 4));
      t.push_back(make("mov", {r, K::I64}, {0xB8}, E::OI, 0, true, 8));
    } else {
      t.push_back(make("mov", {r, K::I32}, {0xB8}, E::OI, 0, false, 4));
      t.push_back(make("mov", {rm, K::I32}, {0xC7}, E::MI, 0, false, 4));
    }

    t.push_back(make("test", {rm, r}, {0x85}, E::MR, 0, w));
    t.push_back(make("test", {rm, K::I32}, {0xF7}, E::MI, 0, w, 4));

    t.push_back(make("imul", {r, rm}, {0x0F, 0xAF}, E::RM, 0, w));
    t.push_back(make("imul", {r, rm, K::I8}, {0x6B}, E::RMI, 0, w, 1));
    t.push_back(make("imul", {r, rm, K::I32}, {0x69}, E::RMI, 0, w, 4));

    t.push_back(make("inc", {rm}, {0xFF}, E::M, 0, w));
    t.push_back(make("dec", {rm}, {0xFF}, E::M, 1, w));
  }

  t.push_back(make("lea", {K::R64, K::M}, {0x8D}, E::RM, 0, true));
  t.push_back(make("movsxd", {K::R64, K::RM32}, {0x63}, E::RM, 0, true));

  t.push_back(make("push", {K::R64}, {0x50}, E::O));
  t.push_back(make("pop", {K::R64}, {0x58}, E::O));

  t.push_back(make("jmp", {K::Rel32}, {0xE9}, E::D, 0, false, 4));
  t.push_back(make("jmp", {K::Rel8}, {0xEB}, E::D, 0, false, 1, true));
  t.push_back(make("jmp", {K::RM64}, {0xFF}, E::M, 4));
  t.push_back(make("call", {K::Rel32}, {0xE8}, E::D, 0, false, 4));
  t.push_back(make("call", {K::RM64}, {0xFF}, E::M, 2));

  for (std::uint8_t cc = 0; cc < 16; ++cc) {
    static std::array<std::string, 16> names;
    names[cc] = "j" + std::string(kConditions[cc]);
    t.push_back(make(names[cc], {K::Rel32}, {0x0F, static_cast<std::uint8_t>(0x80 + cc)}, E::D, 0, false, 4));
    t.push_back(make(names[cc], {K::Rel8}, {static_cast<std::uint8_t>(0x70 + cc)}, E::D, 0, false, 1, true));
  }

  t.push_back(make("ret", {}, {0xC3}, E::ZO));
  t.push_back(make("leave", {}, {0xC9}, E::ZO));
  t.push_back(make("nop", {}, {0x90}, E::ZO));
  t.push_back(make("hlt", {}, {0xF4}, E::ZO));
  t.push_back(make("syscall", {}, {0x0F, 0x05}, E::ZO));
  return t;
}

}  // namespace

std::span<const Form> forms() {
  static const std::vector<Form> table = build_forms();
  return table;
}

bool is_mnemonic(std::string_view mnemonic) {
  const auto canonical = canonical_mnemonic(mnemonic);
  for (const auto& f : forms()) {
    if (f.mnemonic == canonical) return true;
  }
  return false;
}

std::string_view canonical_mnemonic(std::string_view mnemonic) {
  static const std::map<std::string_view, std::string_view> aliases = {
      {"jz", "je"},   {"jnz", "jne"}, {"jc", "jb"},   {"jnc", "jae"}, {"jnae", "jb"}, {"jnb", "jae"},
      {"jna", "jbe"}, {"jnbe", "ja"}, {"jnge", "jl"}, {"jnl", "jge"}, {"jng", "jle"}, {"jnle", "jg"},
      {"jpe", "jp"},  {"jpo", "jnp"}};
  const auto it = aliases.find(mnemonic);
  return it == aliases.end() ? mnemonic : it->second;
}

std::string_view reg_name(Reg r) { return r.bits == 32 ? kNames32.at(r.num & 15) : kNames64.at(r.num & 15); }

std::optional<Reg> parse_reg(std::string_view name) {
  for (std::uint8_t i = 0; i < 16; ++i) {
    if (kNames64[i] == name) return Reg{i, 64};
    if (kNames32[i] == name) return Reg{i, 32};
  }
  return std::nullopt;
}

}  // namespace ellf::isa
