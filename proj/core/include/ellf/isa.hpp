#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ellf/elf.hpp"
#include "ellf/error.hpp"

namespace ellf::isa {

/// General-purpose register: number 0..15 in hardware order, 32- or 64-bit view.
struct Reg {
  std::uint8_t num = 0;
  std::uint8_t bits = 64;

  bool operator==(const Reg&) const = default;
};

inline constexpr Reg kRsp{4, 64};
inline constexpr Reg kRbp{5, 64};

std::string_view reg_name(Reg r);
std::optional<Reg> parse_reg(std::string_view name);

struct Register {
  Reg reg;
  bool operator==(const Register&) const = default;
};

struct Immediate {
  std::int64_t value = 0;
  bool operator==(const Immediate&) const = default;
};

/// Memory operand. `symbol` names a label (rip-relative operands, where
/// `displacement` becomes the offset from the label) or a stack slot constant
/// (rbp-based operands, where `displacement` is the offset into the slot).
struct MemRef {
  std::optional<Reg> base;
  std::optional<Reg> index;
  std::uint8_t scale = 1;
  std::int64_t displacement = 0;
  bool rip_relative = false;
  std::uint8_t width = 0;  // 0 = implied by the other operands, else 32/64
  std::string symbol;

  bool operator==(const MemRef&) const = default;
};

/// Direct branch target, already materialized as an absolute address.
struct PcRel {
  Address target = 0;
  bool operator==(const PcRel&) const = default;
};

struct SymbolRef {
  std::string label;
  std::int64_t offset = 0;
  bool operator==(const SymbolRef&) const = default;
};

using Operand = std::variant<Register, Immediate, MemRef, PcRel, SymbolRef>;

struct Instruction {
  Address address = 0;
  std::uint8_t length = 0;
  std::string mnemonic;
  std::vector<Operand> operands;  // destination first
  std::vector<std::string> annotations;  // emitted before the instruction
  std::vector<std::string> closing;      // emitted after it
  // Byte offsets of the displacement and immediate/relative fields inside the
  // encoding; 0 when absent.
  std::uint8_t disp_offset = 0;
  std::uint8_t imm_offset = 0;

  bool operator==(const Instruction&) const = default;
};

// ------------------------------------------------------------- form table

enum class OpKind : std::uint8_t { R64, R32, RM64, RM32, M64, M32, M, I8, I32, I64, Rel32, Rel8 };

enum class Encoding : std::uint8_t {
  ZO,   // opcode only
  O,    // register in the low opcode bits
  OI,   // O + immediate
  MR,   // modrm.rm = op0, modrm.reg = op1
  RM,   // modrm.reg = op0, modrm.rm = op1
  M,    // modrm.rm = op0, modrm.reg = digit
  MI,   // M + immediate
  RMI,  // RM + immediate
  D,    // relative branch
};

struct Form {
  std::string_view mnemonic;
  std::array<OpKind, 3> ops{};
  std::uint8_t arity = 0;
  std::array<std::uint8_t, 2> opcode{};
  std::uint8_t opcode_len = 1;
  Encoding enc = Encoding::ZO;
  std::uint8_t digit = 0;
  bool rex_w = false;
  std::uint8_t imm_bytes = 0;
  bool decode_only = false;  // accepted by the decoder, never chosen by the encoder

  std::span<const OpKind> operand_kinds() const { return {ops.data(), arity}; }
};

/// Every supported form, in encoder preference order.
std::span<const Form> forms();

bool is_mnemonic(std::string_view mnemonic);

/// Canonical name for aliases accepted by the parser (jz -> je, ...).
std::string_view canonical_mnemonic(std::string_view mnemonic);

// -------------------------------------------------------------- codec

using SymbolResolver = std::function<Address(std::string_view)>;

/// Decodes exactly one instruction at `addr`. Only canonical encodings are
/// accepted (those encode_one would produce); anything else is UnknownOpcode.
Instruction decode_one(std::span<const std::uint8_t> bytes, Address addr);
Instruction decode_one(const MemoryImage& image, Address addr);

/// Encodes the first matching form. PcRel and rip-relative operands are
/// resolved against `at`; SymbolRef and rip-relative symbols need `resolve`.
std::vector<std::uint8_t> encode_one(std::string_view mnemonic, std::span<const Operand> operands, Address at = 0,
                                     const SymbolResolver& resolve = {});

/// The form encode_one would pick, or nullptr.
const Form* select_form(std::string_view mnemonic, std::span<const Operand> operands);

// ------------------------------------------------------ classification

enum class FlowKind { Fallthrough, Jump, ConditionalJump, IndirectJump, Call, IndirectCall, Return, Halt };

struct Flow {
  FlowKind kind = FlowKind::Fallthrough;
  std::optional<Address> target;  // direct jumps and calls with a PcRel operand
};

Flow instruction_class(const Instruction& insn);

// ---------------------------------------------------------- rendering

std::string format_operand(const Operand& op);
std::string format_instruction(const Instruction& insn);

}  // namespace ellf::isa
