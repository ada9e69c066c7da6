#include <algorithm>
#include <cstdio>
#include <sstream>

#include "ellf/lifter.hpp"

namespace ellf {

namespace {

constexpr std::size_t kBytesPerLine = 16;
constexpr std::size_t kMinString = 2;
constexpr std::size_t kMinZeroRun = 8;

bool string_char(std::uint8_t c) { return (c >= 0x20 && c < 0x7f) || c == '\n' || c == '\t'; }

std::string byte_hex(std::uint8_t b) {
  char buf[8];
  std::snprintf(buf, sizeof(buf), "0x%02x", b);
  return buf;
}

std::string label_expr(const std::string& label, std::int64_t offset) {
  if (offset == 0) return label;
  if (offset < 0) return label + "-" + hex(0 - static_cast<std::uint64_t>(offset));
  return label + "+" + hex(static_cast<std::uint64_t>(offset));
}

void emit_byte_lines(std::ostream& out, const std::uint8_t* p, std::size_t n) {
  for (std::size_t i = 0; i < n; i += kBytesPerLine) {
    out << "  .byte ";
    for (std::size_t j = i; j < std::min(n, i + kBytesPerLine); ++j) out << (j == i ? "" : ", ") << byte_hex(p[j]);
    out << '\n';
  }
}

void emit_asciz(std::ostream& out, const std::uint8_t* p, std::size_t n) {
  out << "  .asciz \"";
  for (std::size_t i = 0; i < n; ++i) {
    switch (p[i]) {
      case '"': out << "\\\""; break;
      case '\\': out << "\\\\"; break;
      case '\n': out << "\\n"; break;
      case '\t': out << "\\t"; break;
      default: out << static_cast<char>(p[i]);
    }
  }
  out << "\"\n";
}

// Strings and long zero runs get their own directives; everything else is .byte.
void emit_raw(std::ostream& out, const std::vector<std::uint8_t>& bytes) {
  const std::size_t n = bytes.size();
  std::size_t pending = 0;  // start of the unflushed .byte run
  std::size_t i = 0;
  auto flush = [&](std::size_t upto) {
    if (upto > pending) emit_byte_lines(out, bytes.data() + pending, upto - pending);
  };
  while (i < n) {
    std::size_t j = i;
    while (j < n && string_char(bytes[j])) ++j;
    if (j < n && bytes[j] == 0 && j - i >= kMinString) {
      flush(i);
      emit_asciz(out, bytes.data() + i, j - i);
      i = pending = j + 1;
      continue;
    }
    j = i;
    while (j < n && bytes[j] == 0) ++j;
    if (j - i >= kMinZeroRun) {
      flush(i);
      out << "  .zero " << (j - i) << '\n';
      i = pending = j;
      continue;
    }
    ++i;
  }
  flush(n);
}

void emit_payload(std::ostream& out, const Payload& p) {
  if (const auto* r = std::get_if<RawBytes>(&p)) {
    emit_raw(out, r->bytes);
  } else if (const auto* ptr = std::get_if<PointerPayload>(&p)) {
    out << "  .quad " << label_expr(ptr->label, ptr->offset) << '\n';
  } else if (const auto* d = std::get_if<DiffPayload>(&p)) {
    out << (d->width == 4 ? "  .long " : "  .quad ") << label_expr(d->minuend, d->minuend_offset) << " - ";
    if (d->subtrahend_offset == 0) {
      out << d->subtrahend;
    } else {
      out << '(' << label_expr(d->subtrahend, d->subtrahend_offset) << ')';
    }
    out << '\n';
  } else {
    out << "  .zero " << std::get<Zeroes>(p).size << '\n';
  }
}

void emit_code_section(std::ostream& out, const LiftedProgram& lp, const SectionInfo& sec) {
  Address pc = sec.vaddr;
  while (pc < sec.end()) {
    if (const Label* l = lp.labels.at(pc); l && (l->kind == LabelKind::Anchor || l->kind == LabelKind::Data)) {
      out << l->name << ":\n";
    }
    auto it = lp.instructions.find(pc);
    if (it != lp.instructions.end()) {
      const auto& insn = it->second;
      for (const auto& a : insn.annotations) out << a << '\n';
      if (auto slots = lp.labels.slots.find(pc); slots != lp.labels.slots.end()) {
        const Label* fn = lp.labels.at(pc);
        for (const auto& s : slots->second) {
          out << ".slot " << (fn ? fn->name : hex(pc)) << ", " << s.name << ", " << s.offset << '\n';
        }
      }
      out << "  " << isa::format_instruction(insn) << '\n';
      for (const auto& c : insn.closing) out << c << '\n';
      pc += insn.length;
      continue;
    }

    // Padding: bytes outside every region, up to the next instruction or label.
    Address stop = sec.end();
    if (auto next = lp.instructions.lower_bound(pc + 1); next != lp.instructions.end()) stop = std::min(stop, next->first);
    if (auto next = lp.labels.entries().upper_bound(pc); next != lp.labels.entries().end()) stop = std::min(stop, next->first);
    const auto bytes = lp.image.read(pc, stop - pc);
    emit_byte_lines(out, bytes.data(), bytes.size());
    pc = stop;
  }
}

void emit_data_section(std::ostream& out, const LiftedProgram& lp, const SectionInfo& sec) {
  for (const auto& var : lp.variables) {
    if (var.address < sec.vaddr || var.address >= sec.end()) continue;
    if (!var.label.empty()) out << var.label << ":\n";
    for (const auto& p : var.payload) emit_payload(out, p);
    auto rec = std::find_if(lp.meta.data.begin(), lp.meta.data.end(), [&](const DataRecord& d) { return d.addr == var.address; });
    if (rec != lp.meta.data.end() && rec->size != var.size && !var.label.empty()) {
      out << ".size " << var.label << ", " << rec->size << '\n';
    }
  }
}

}  // namespace

std::string emit_assembly(const LiftedProgram& lp) {
  std::ostringstream out;
  for (const auto& sec : lp.sections) {
    out << ".section " << sec.name << " base=" << hex(sec.vaddr) << '\n';
    if (sec.flags.exec) {
      emit_code_section(out, lp, sec);
    } else {
      emit_data_section(out, lp, sec);
    }
  }
  return out.str();
}

}  // namespace ellf
