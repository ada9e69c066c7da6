#include <optional>

#include "ellf/isa.hpp"
#include "isa_internal.hpp"

namespace ellf::isa {

namespace {

using detail::kind_width;
using detail::mem_needs_width;

bool is_register_kind(OpKind k) { return k == OpKind::R64 || k == OpKind::R32; }
bool is_memory_only_kind(OpKind k) { return k == OpKind::M64 || k == OpKind::M32 || k == OpKind::M; }

class Cursor {
 public:
  Cursor(std::span<const std::uint8_t> bytes, std::size_t pos) : b_(bytes), pos_(pos) {}

  std::uint8_t peek() const {
    need(1);
    return b_[pos_];
  }
  std::uint8_t u8() {
    need(1);
    return b_[pos_++];
  }
  std::int64_t signed_le(std::size_t n) {
    need(n);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(b_[pos_ + i]) << (8 * i);
    pos_ += n;
    if (n < 8) {
      const std::uint64_t sign = std::uint64_t{1} << (8 * n - 1);
      v = (v ^ sign) - sign;
    }
    return static_cast<std::int64_t>(v);
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > b_.size()) fail(ErrorKind::TruncatedInstruction, "instruction runs past the available bytes");
  }

  std::span<const std::uint8_t> b_;
  std::size_t pos_;
};

struct Prefix {
  std::uint8_t rex = 0;
  std::size_t opcode_pos = 0;
  std::size_t opcode_end = 0;
  bool two_byte = false;
};

bool opcode_matches(const Form& f, std::span<const std::uint8_t> b, const Prefix& p) {
  if (f.opcode_len != (p.two_byte ? 2 : 1)) return false;
  if (p.two_byte) return f.opcode[0] == 0x0F && f.opcode[1] == b[p.opcode_pos + 1];
  if (f.enc == Encoding::O || f.enc == Encoding::OI) return (b[p.opcode_pos] & 0xF8) == f.opcode[0];
  return b[p.opcode_pos] == f.opcode[0];
}

std::optional<Instruction> try_form(const Form& f, std::span<const std::uint8_t> b, const Prefix& p, Address addr) {
  Cursor c(b, p.opcode_end);
  const bool rex_r = (p.rex & 0x04) != 0, rex_x = (p.rex & 0x02) != 0, rex_b = (p.rex & 0x01) != 0;

  Instruction insn;
  insn.address = addr;
  insn.mnemonic = std::string(f.mnemonic);
  insn.operands.resize(f.arity);

  const bool has_modrm = f.enc == Encoding::MR || f.enc == Encoding::RM || f.enc == Encoding::RMI ||
                         f.enc == Encoding::M || f.enc == Encoding::MI;
  if (has_modrm) {
    const std::uint8_t modrm = c.u8();
    const std::uint8_t mod = modrm >> 6, reg = (modrm >> 3) & 7, rm = modrm & 7;
    if ((f.enc == Encoding::M || f.enc == Encoding::MI) && reg != f.digit) return std::nullopt;

    const std::size_t rm_slot = (f.enc == Encoding::RM || f.enc == Encoding::RMI) ? 1 : 0;
    const OpKind rm_kind = f.ops[rm_slot];
    if (mod == 3) {
      if (is_memory_only_kind(rm_kind)) return std::nullopt;
      insn.operands[rm_slot] = Register{Reg{static_cast<std::uint8_t>(rm | (rex_b ? 8 : 0)), kind_width(rm_kind)}};
    } else {
      if (is_register_kind(rm_kind)) return std::nullopt;
      MemRef m;
      std::size_t disp_bytes = mod == 1 ? 1 : mod == 2 ? 4 : 0;
      if (rm == 4) {
        const std::uint8_t sib = c.u8();
        const std::uint8_t ss = sib >> 6, idx = static_cast<std::uint8_t>(((sib >> 3) & 7) | (rex_x ? 8 : 0)),
                           base = sib & 7;
        if (idx != 4) {
          m.index = Reg{idx, 64};
          m.scale = static_cast<std::uint8_t>(1u << ss);
        } else if (ss != 0) {
          return std::nullopt;
        }
        if (base == 5 && mod == 0) {
          disp_bytes = 4;
        } else {
          m.base = Reg{static_cast<std::uint8_t>(base | (rex_b ? 8 : 0)), 64};
        }
      } else if (rm == 5 && mod == 0) {
        m.rip_relative = true;
        disp_bytes = 4;
      } else {
        m.base = Reg{static_cast<std::uint8_t>(rm | (rex_b ? 8 : 0)), 64};
      }
      if (disp_bytes > 0) {
        insn.disp_offset = static_cast<std::uint8_t>(c.pos());
        m.displacement = c.signed_le(disp_bytes);
      }
      if (mem_needs_width(f)) m.width = kind_width(rm_kind);
      insn.operands[rm_slot] = std::move(m);
    }

    if (f.enc == Encoding::MR || f.enc == Encoding::RM || f.enc == Encoding::RMI) {
      const std::size_t reg_slot = f.enc == Encoding::MR ? 1 : 0;
      insn.operands[reg_slot] =
          Register{Reg{static_cast<std::uint8_t>(reg | (rex_r ? 8 : 0)), kind_width(f.ops[reg_slot])}};
    }
  } else if (f.enc == Encoding::O || f.enc == Encoding::OI) {
    const auto num = static_cast<std::uint8_t>((b[p.opcode_pos] & 7) | (rex_b ? 8 : 0));
    insn.operands[0] = Register{Reg{num, kind_width(f.ops[0])}};
  }

  if (f.imm_bytes > 0) {
    insn.imm_offset = static_cast<std::uint8_t>(c.pos());
    const std::int64_t value = c.signed_le(f.imm_bytes);
    if (f.enc == Encoding::D) {
      insn.operands[0] = PcRel{addr + c.pos() + static_cast<Address>(value)};
    } else {
      insn.operands[f.arity - 1] = Immediate{value};
    }
  }

  insn.length = static_cast<std::uint8_t>(c.pos());
  if (!f.decode_only) {
    const auto again = encode_one(insn.mnemonic, insn.operands, addr);
    if (again.size() != insn.length || !std::equal(again.begin(), again.end(), b.begin())) return std::nullopt;
  }
  return insn;
}

}  // namespace

Instruction decode_one(std::span<const std::uint8_t> bytes, Address addr) {
  if (bytes.empty()) fail(ErrorKind::TruncatedInstruction, "no bytes at " + hex(addr));
  Prefix p;
  if ((bytes[0] & 0xF0) == 0x40) {
    p.rex = bytes[0];
    p.opcode_pos = 1;
  }
  if (p.opcode_pos >= bytes.size()) fail(ErrorKind::TruncatedInstruction, "REX prefix without opcode at " + hex(addr));
  p.two_byte = bytes[p.opcode_pos] == 0x0F;
  if (p.two_byte && p.opcode_pos + 1 >= bytes.size()) {
    fail(ErrorKind::TruncatedInstruction, "two-byte opcode cut short at " + hex(addr));
  }
  p.opcode_end = p.opcode_pos + (p.two_byte ? 2 : 1);

  for (const auto& f : forms()) {
    if (!opcode_matches(f, bytes, p)) continue;
    if (f.rex_w != ((p.rex & 0x08) != 0)) continue;
    try {
      if (auto insn = try_form(f, bytes, p, addr)) return *insn;
    } catch (const Error& e) {
      // Encoding range errors during the canonical re-check mean "not this form".
      if (e.kind() == ErrorKind::TruncatedInstruction) throw;
    }
  }

  char buf[8];
  std::snprintf(buf, sizeof(buf), "%02X", bytes[0]);
  fail(ErrorKind::UnknownOpcode, std::string("byte ") + buf + " at " + hex(addr) + " is outside the supported subset");
}

Instruction decode_one(const MemoryImage& image, Address addr) {
  const auto bytes = image.tail(addr);
  if (bytes.empty()) fail(ErrorKind::TruncatedInstruction, "address " + hex(addr) + " is not mapped");
  return decode_one(bytes.first(std::min<std::size_t>(bytes.size(), 15)), addr);
}

}  // namespace ellf::isa
