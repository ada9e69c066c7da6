#include <limits>

#include "ellf/isa.hpp"
#include "isa_internal.hpp"

namespace ellf::isa {

namespace {

using detail::kind_width;
using detail::mem_needs_width;

bool fits_i8(std::int64_t v) { return v >= -128 && v <= 127; }
bool fits_i32(std::int64_t v) {
  return v >= std::numeric_limits<std::int32_t>::min() && v <= std::numeric_limits<std::int32_t>::max();
}

bool is_reg(const Operand& op, std::uint8_t bits) {
  const auto* r = std::get_if<Register>(&op);
  return r != nullptr && r->reg.bits == bits;
}

bool mem_matches(const MemRef& m, OpKind k, const Form& f) {
  if (k == OpKind::M) return m.width == 0;
  const std::uint8_t w = kind_width(k);
  if (mem_needs_width(f)) return m.width == w;
  return m.width == 0 || m.width == w;
}

bool matches(OpKind k, const Operand& op, const Form& f) {
  switch (k) {
    case OpKind::R64: return is_reg(op, 64);
    case OpKind::R32: return is_reg(op, 32);
    case OpKind::RM64:
    case OpKind::RM32:
      if (const auto* m = std::get_if<MemRef>(&op)) return mem_matches(*m, k, f);
      return is_reg(op, kind_width(k));
    case OpKind::M64:
    case OpKind::M32:
    case OpKind::M:
      if (const auto* m = std::get_if<MemRef>(&op)) return mem_matches(*m, k, f);
      return false;
    case OpKind::I8:
      if (const auto* i = std::get_if<Immediate>(&op)) return fits_i8(i->value);
      return false;
    case OpKind::I32:
      if (const auto* i = std::get_if<Immediate>(&op)) return fits_i32(i->value);
      return std::holds_alternative<SymbolRef>(op);
    case OpKind::I64: return std::holds_alternative<Immediate>(op);
    case OpKind::Rel32: return std::holds_alternative<PcRel>(op) || std::holds_alternative<SymbolRef>(op);
    case OpKind::Rel8: return false;
  }
  return false;
}

class Encoder {
 public:
  Encoder(const Form& form, std::span<const Operand> ops, Address at, const SymbolResolver& resolve)
      : f_(form), ops_(ops), at_(at), resolve_(resolve) {}

  std::vector<std::uint8_t> run() {
    std::uint8_t rex = f_.rex_w ? 0x08 : 0x00;
    std::uint8_t reg_field = 0;
    const Operand* rm = nullptr;
    const Operand* imm = nullptr;

    switch (f_.enc) {
      case Encoding::ZO:
      case Encoding::D: break;
      case Encoding::O:
      case Encoding::OI: {
        const Reg r = std::get<Register>(ops_[0]).reg;
        if (r.num >= 8) rex |= 0x01;
        if (f_.enc == Encoding::OI) imm = &ops_[1];
        break;
      }
      case Encoding::MR:
        rm = &ops_[0];
        reg_field = std::get<Register>(ops_[1]).reg.num;
        break;
      case Encoding::RM:
      case Encoding::RMI:
        reg_field = std::get<Register>(ops_[0]).reg.num;
        rm = &ops_[1];
        if (f_.enc == Encoding::RMI) imm = &ops_[2];
        break;
      case Encoding::M:
      case Encoding::MI:
        rm = &ops_[0];
        reg_field = f_.digit;
        if (f_.enc == Encoding::MI) imm = &ops_[1];
        break;
    }
    if (reg_field >= 8) rex |= 0x04;

    std::vector<std::uint8_t> modrm;
    if (rm != nullptr) modrm = encode_rm(*rm, reg_field & 7, rex);

    if (rex != 0) out_.push_back(static_cast<std::uint8_t>(0x40 | rex));
    for (std::uint8_t i = 0; i < f_.opcode_len; ++i) out_.push_back(f_.opcode[i]);
    if (f_.enc == Encoding::O || f_.enc == Encoding::OI) {
      out_.back() = static_cast<std::uint8_t>(out_.back() + (std::get<Register>(ops_[0]).reg.num & 7));
    }
    if (!modrm.empty()) {
      if (disp_pos_ >= 0) disp_pos_ += static_cast<int>(out_.size());
      out_.insert(out_.end(), modrm.begin(), modrm.end());
    }

    if (f_.enc == Encoding::D) {
      const std::size_t pos = out_.size();
      out_.resize(pos + f_.imm_bytes, 0);
      const Address target = target_of(ops_[0]);
      const auto rel = static_cast<std::int64_t>(target - (at_ + out_.size()));
      if (!fits_i32(rel)) fail(ErrorKind::RangeOverflow, "branch target " + hex(target) + " out of rel32 range");
      write_le(pos, rel, 4);
    } else if (imm != nullptr) {
      const std::int64_t value = immediate_of(*imm);
      if (f_.imm_bytes == 1 && !fits_i8(value)) fail(ErrorKind::RangeOverflow, "immediate does not fit 8 bits");
      if (f_.imm_bytes == 4 && !fits_i32(value)) fail(ErrorKind::RangeOverflow, "immediate " + std::to_string(value) + " does not fit 32 bits");
      const std::size_t pos = out_.size();
      out_.resize(pos + f_.imm_bytes, 0);
      write_le(pos, value, f_.imm_bytes);
    }

    if (rip_) {
      const auto disp = static_cast<std::int64_t>(rip_target_ - (at_ + out_.size()));
      if (!fits_i32(disp)) fail(ErrorKind::RangeOverflow, "rip-relative target " + hex(rip_target_) + " out of range");
      write_le(static_cast<std::size_t>(disp_pos_), disp, 4);
    } else if (rip_raw_) {
      write_le(static_cast<std::size_t>(disp_pos_), rip_disp_, 4);
    }
    return std::move(out_);
  }

 private:
  void write_le(std::size_t pos, std::int64_t value, std::size_t n) {
    auto u = static_cast<std::uint64_t>(value);
    for (std::size_t i = 0; i < n; ++i) {
      out_[pos + i] = static_cast<std::uint8_t>(u & 0xff);
      u >>= 8;
    }
  }

  Address resolve(const std::string& label) const {
    if (!resolve_) fail(ErrorKind::UnsupportedForm, "symbol " + label + " needs a resolver");
    return resolve_(label);
  }

  Address target_of(const Operand& op) const {
    if (const auto* p = std::get_if<PcRel>(&op)) return p->target;
    const auto& s = std::get<SymbolRef>(op);
    return resolve(s.label) + static_cast<Address>(s.offset);
  }

  std::int64_t immediate_of(const Operand& op) const {
    if (const auto* i = std::get_if<Immediate>(&op)) return i->value;
    const auto& s = std::get<SymbolRef>(op);
    return static_cast<std::int64_t>(resolve(s.label) + static_cast<Address>(s.offset));
  }

  std::vector<std::uint8_t> encode_rm(const Operand& op, std::uint8_t reg_low, std::uint8_t& rex) {
    if (const auto* r = std::get_if<Register>(&op)) {
      if (r->reg.num >= 8) rex |= 0x01;
      return {static_cast<std::uint8_t>(0xC0 | (reg_low << 3) | (r->reg.num & 7))};
    }
    const auto& m = std::get<MemRef>(op);
    std::vector<std::uint8_t> b;

    if (m.rip_relative) {
      if (m.base || m.index) fail(ErrorKind::UnsupportedForm, "rip-relative operand with base or index");
      b.push_back(static_cast<std::uint8_t>((reg_low << 3) | 0x05));
      disp_pos_ = 1;
      b.resize(5, 0);
      if (!m.symbol.empty()) {
        rip_ = true;
        rip_target_ = resolve(m.symbol) + static_cast<Address>(m.displacement);
      } else {
        if (!fits_i32(m.displacement)) fail(ErrorKind::RangeOverflow, "displacement does not fit 32 bits");
        rip_raw_ = true;
        rip_disp_ = m.displacement;
      }
      return b;
    }

    if (!m.symbol.empty()) fail(ErrorKind::UnsupportedForm, "unresolved stack slot " + m.symbol);
    if (!fits_i32(m.displacement)) fail(ErrorKind::RangeOverflow, "displacement does not fit 32 bits");
    if (m.base && m.base->bits != 64) fail(ErrorKind::UnsupportedForm, "32-bit address registers are not supported");
    if (m.index && m.index->bits != 64) fail(ErrorKind::UnsupportedForm, "32-bit address registers are not supported");
    if (m.index && m.index->num == 4) fail(ErrorKind::UnsupportedForm, "rsp cannot be an index register");
    if (m.scale != 1 && m.scale != 2 && m.scale != 4 && m.scale != 8) fail(ErrorKind::UnsupportedForm, "bad scale");
    if (!m.index && m.scale != 1) fail(ErrorKind::UnsupportedForm, "scale without index");
    if (!m.base && !m.index) fail(ErrorKind::UnsupportedForm, "absolute memory operands are not supported");

    const auto scale_bits = [](std::uint8_t s) -> std::uint8_t { return s == 1 ? 0 : s == 2 ? 1 : s == 4 ? 2 : 3; };
    if (m.index && m.index->num >= 8) rex |= 0x02;

    if (!m.base) {
      // [index*scale + disp32]
      b.push_back(static_cast<std::uint8_t>((reg_low << 3) | 0x04));
      b.push_back(static_cast<std::uint8_t>((scale_bits(m.scale) << 6) | ((m.index->num & 7) << 3) | 0x05));
      disp_pos_ = -1;
      append_disp(b, m.displacement, 4);
      return b;
    }

    const std::uint8_t base = m.base->num;
    if (base >= 8) rex |= 0x01;
    std::uint8_t mod;
    std::size_t disp_bytes;
    if (m.displacement == 0 && (base & 7) != 5) {
      mod = 0;
      disp_bytes = 0;
    } else if (fits_i8(m.displacement)) {
      mod = 1;
      disp_bytes = 1;
    } else {
      mod = 2;
      disp_bytes = 4;
    }
    const bool sib = m.index.has_value() || (base & 7) == 4;
    b.push_back(static_cast<std::uint8_t>((mod << 6) | (reg_low << 3) | (sib ? 4 : (base & 7))));
    if (sib) {
      const std::uint8_t index = m.index ? (m.index->num & 7) : 4;
      b.push_back(static_cast<std::uint8_t>((scale_bits(m.scale) << 6) | (index << 3) | (base & 7)));
    }
    append_disp(b, m.displacement, disp_bytes);
    return b;
  }

  static void append_disp(std::vector<std::uint8_t>& b, std::int64_t disp, std::size_t n) {
    auto u = static_cast<std::uint64_t>(disp);
    for (std::size_t i = 0; i < n; ++i) {
      b.push_back(static_cast<std::uint8_t>(u & 0xff));
      u >>= 8;
    }
  }

  const Form& f_;
  std::span<const Operand> ops_;
  Address at_;
  const SymbolResolver& resolve_;
  std::vector<std::uint8_t> out_;
  int disp_pos_ = -1;
  bool rip_ = false;
  bool rip_raw_ = false;
  Address rip_target_ = 0;
  std::int64_t rip_disp_ = 0;
};

}  // namespace

const Form* select_form(std::string_view mnemonic, std::span<const Operand> operands) {
  for (const auto& f : forms()) {
    if (f.decode_only || f.mnemonic != mnemonic || f.arity != operands.size()) continue;
    bool ok = true;
    for (std::size_t i = 0; i < f.arity && ok; ++i) ok = matches(f.ops[i], operands[i], f);
    if (ok) return &f;
  }
  return nullptr;
}

std::vector<std::uint8_t> encode_one(std::string_view mnemonic, std::span<const Operand> operands, Address at,
                                     const SymbolResolver& resolve) {
  const Form* f = select_form(mnemonic, operands);
  if (f == nullptr) {
    std::string text(mnemonic);
    for (std::size_t i = 0; i < operands.size(); ++i) text += (i == 0 ? " " : ", ") + format_operand(operands[i]);
    fail(ErrorKind::UnsupportedForm, text);
  }
  return Encoder(*f, operands, at, resolve).run();
}

}  // namespace ellf::isa
