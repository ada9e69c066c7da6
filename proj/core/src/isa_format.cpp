#include <cstdio>

#include "ellf/isa.hpp"

namespace ellf::isa {

namespace {

std::string signed_hex_suffix(std::int64_t v) {
  if (v == 0) return "";
  if (v < 0) return " - " + hex(0 - static_cast<std::uint64_t>(v));
  return " + " + hex(static_cast<std::uint64_t>(v));
}

bool is_conditional(std::string_view m) { return m.size() >= 2 && m[0] == 'j' && m != "jmp"; }

}  // namespace

Flow instruction_class(const Instruction& insn) {
  const std::string_view m = insn.mnemonic;
  const Operand* first = insn.operands.empty() ? nullptr : &insn.operands[0];
  std::optional<Address> target;
  if (first) {
    if (const auto* p = std::get_if<PcRel>(first)) target = p->target;
  }
  const bool direct = first && (std::holds_alternative<PcRel>(*first) || std::holds_alternative<SymbolRef>(*first));

  if (m == "ret") return {FlowKind::Return, std::nullopt};
  if (m == "hlt") return {FlowKind::Halt, std::nullopt};
  if (m == "jmp") return {direct ? FlowKind::Jump : FlowKind::IndirectJump, target};
  if (m == "call") return {direct ? FlowKind::Call : FlowKind::IndirectCall, target};
  if (is_conditional(m)) return {FlowKind::ConditionalJump, target};
  return {FlowKind::Fallthrough, std::nullopt};
}

std::string format_operand(const Operand& op) {
  if (const auto* r = std::get_if<Register>(&op)) return std::string(reg_name(r->reg));
  if (const auto* i = std::get_if<Immediate>(&op)) return std::to_string(i->value);
  if (const auto* p = std::get_if<PcRel>(&op)) return hex(p->target);
  if (const auto* s = std::get_if<SymbolRef>(&op)) {
    if (s->offset == 0) return s->label;
    if (s->offset < 0) return s->label + "-" + hex(0 - static_cast<std::uint64_t>(s->offset));
    return s->label + "+" + hex(static_cast<std::uint64_t>(s->offset));
  }

  const auto& m = std::get<MemRef>(op);
  std::string out;
  if (m.width == 64) out = "qword ";
  if (m.width == 32) out = "dword ";
  out += '[';
  if (m.rip_relative) {
    out += m.symbol.empty() ? "rip" : m.symbol;
  } else {
    bool any = false;
    if (m.base) {
      out += reg_name(*m.base);
      any = true;
    }
    if (m.index) {
      if (any) out += " + ";
      out += reg_name(*m.index);
      out += '*';
      out += std::to_string(m.scale);
      any = true;
    }
    if (!m.symbol.empty()) {
      if (any) out += " + ";
      out += m.symbol;
      any = true;
    }
    if (!any) {
      out += hex(static_cast<std::uint64_t>(m.displacement));
      return out + ']';
    }
  }
  out += signed_hex_suffix(m.displacement);
  return out + ']';
}

std::string format_instruction(const Instruction& insn) {
  std::string out = insn.mnemonic;
  for (std::size_t i = 0; i < insn.operands.size(); ++i) {
    out += i == 0 ? " " : ", ";
    out += format_operand(insn.operands[i]);
  }
  return out;
}

}  // namespace ellf::isa
