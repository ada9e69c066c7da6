#include <algorithm>
#include <set>

#include "ellf/lifter.hpp"
#include "ellf/validate.hpp"

namespace ellf {

std::uint64_t payload_size(const Payload& p) {
  if (const auto* r = std::get_if<RawBytes>(&p)) return r->bytes.size();
  if (std::holds_alternative<PointerPayload>(p)) return 8;
  if (const auto* d = std::get_if<DiffPayload>(&p)) return d->width;
  return std::get<Zeroes>(p).size;
}

const CfgBlock* Cfg::block(Address start) const {
  for (const auto& b : blocks) {
    if (b.start == start) return &b;
  }
  return nullptr;
}

const SectionInfo* LiftedProgram::section_containing(Address a) const {
  for (const auto& s : sections) {
    if (a >= s.vaddr && a < s.end()) return &s;
  }
  return nullptr;
}

namespace {

// Strict mode turns problems into errors; lenient mode records them and the
// caller takes its degradation path.
void report(LiftedProgram& lp, ErrorKind kind, Address addr, const std::string& msg) {
  if (lp.mode == LiftMode::Strict) fail(kind, msg);
  lp.diagnostics.push_back(Diagnostic{Severity::Warning, DiagKind::LiftError, addr, msg, kind});
}

std::vector<Address> function_starts(const EllfMetadata& meta) {
  std::vector<Address> out;
  for (const auto& t : meta.text) {
    if (t.kind == TextKind::FunctionStart) out.push_back(t.addr);
  }
  return out;
}

// End of the function starting at `entry`: the next function start in the
// same section, or the section end.
Address function_limit(const LiftedProgram& lp, const std::vector<Address>& starts, Address entry) {
  const SectionInfo* sec = lp.section_containing(entry);
  Address limit = sec ? sec->end() : entry;
  auto it = std::upper_bound(starts.begin(), starts.end(), entry);
  if (it != starts.end() && *it < limit) limit = *it;
  return limit;
}

std::uint64_t read_le(const MemoryImage& image, Address addr, std::uint8_t width) {
  const auto bytes = image.read(addr, width);
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < bytes.size(); ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return v;
}

std::uint64_t truncate(std::uint64_t v, std::uint8_t width) {
  return width >= 8 ? v : v & ((std::uint64_t{1} << (8 * width)) - 1);
}

}  // namespace

std::map<Address, isa::Instruction> lift_unsymbolized(const MemoryImage& image,
                                                      const std::vector<InstructionRegion>& regions) {
  std::map<Address, isa::Instruction> out;
  for (auto& insn : decode_regions(regions, image)) {
    const Address a = insn.address;
    out.emplace(a, std::move(insn));
  }
  return out;
}

void coarse_symbolize(LiftedProgram& lp) {
  for (const auto& rec : lp.meta.pointers) {
    if (const auto* op = std::get_if<OperandPointer>(&rec)) {
      auto it = lp.instructions.find(op->instr_addr);
      if (it == lp.instructions.end()) {
        report(lp, ErrorKind::InvalidMetadata, op->instr_addr, "operand pointer at " + hex(op->instr_addr) + " names no instruction");
        continue;
      }
      isa::Instruction& insn = it->second;
      if (op->operand_index >= insn.operands.size()) {
        report(lp, ErrorKind::OperandIndexOutOfRange, insn.address,
               "operand " + std::to_string(op->operand_index) + " of " + isa::format_instruction(insn) + " at " + hex(insn.address));
        continue;
      }
      const auto target = lp.labels.lookup(op->target);
      if (!target) {
        report(lp, ErrorKind::InvalidMetadata, insn.address, "pointer target " + hex(op->target) + " is outside every section");
        continue;
      }
      isa::Operand& operand = insn.operands[op->operand_index];
      std::optional<Address> decoded;
      if (const auto* p = std::get_if<isa::PcRel>(&operand)) {
        decoded = p->target;
      } else if (const auto* imm = std::get_if<isa::Immediate>(&operand)) {
        decoded = static_cast<Address>(imm->value);
      } else if (const auto* m = std::get_if<isa::MemRef>(&operand); m && m->rip_relative && m->symbol.empty()) {
        decoded = insn.address + insn.length + static_cast<Address>(m->displacement);
      }
      if (!decoded) {
        report(lp, ErrorKind::NotAPointerPosition, insn.address,
               "operand " + std::to_string(op->operand_index) + " of " + isa::format_instruction(insn) + " at " +
                   hex(insn.address) + " cannot hold a pointer");
        continue;
      }
      if (*decoded != op->target) {
        report(lp, ErrorKind::PointerMismatch, insn.address,
               "instruction at " + hex(insn.address) + " encodes " + hex(*decoded) + " but metadata says " + hex(op->target));
      }
      const auto offset = static_cast<std::int64_t>(target->second);
      if (auto* m = std::get_if<isa::MemRef>(&operand)) {
        m->symbol = target->first;
        m->displacement = offset;
      } else {
        operand = isa::SymbolRef{target->first, offset};
      }
      continue;
    }

    Address at = 0;
    std::uint8_t width = 8;
    std::uint64_t expected = 0;
    Payload payload;
    if (const auto* dp = std::get_if<DataPointer>(&rec)) {
      const auto t = lp.labels.lookup(dp->target);
      if (!t) {
        report(lp, ErrorKind::InvalidMetadata, dp->addr, "pointer target " + hex(dp->target) + " is outside every section");
        continue;
      }
      at = dp->addr;
      expected = dp->target;
      payload = PointerPayload{t->first, static_cast<std::int64_t>(t->second)};
    } else {
      const auto& dd = std::get<DataDiff>(rec);
      const auto m = lp.labels.lookup(dd.minuend);
      const auto s = lp.labels.lookup(dd.subtrahend);
      if (!m || !s) {
        report(lp, ErrorKind::InvalidMetadata, dd.addr, "difference operand outside every section at " + hex(dd.addr));
        continue;
      }
      at = dd.addr;
      width = dd.width;
      expected = dd.minuend - dd.subtrahend;
      payload = DiffPayload{m->first, static_cast<std::int64_t>(m->second), s->first, static_cast<std::int64_t>(s->second),
                            dd.width};
    }
    if (!lp.image.contains(at, width)) {
      report(lp, ErrorKind::InvalidMetadata, at, "data pointer at " + hex(at) + " is not mapped");
      continue;
    }
    if (read_le(lp.image, at, width) != truncate(expected, width)) {
      report(lp, ErrorKind::PointerMismatch, at, "data at " + hex(at) + " does not hold the value the metadata describes");
    }
    lp.earmarks[at] = Earmark{width, std::move(payload)};
  }
}

void text_symbolize(LiftedProgram& lp) {
  const auto starts = function_starts(lp.meta);
  std::map<Address, std::vector<Address>> ends_by_function;
  std::vector<Address> orphan_ends;

  for (const auto& t : lp.meta.text) {
    auto it = lp.instructions.find(t.addr);
    if (it == lp.instructions.end()) {
      report(lp, ErrorKind::DanglingTextRecord, t.addr, std::string(to_string(t.kind)) + " record at " + hex(t.addr) + " is not an instruction start");
      continue;
    }
    const Label* label = lp.labels.at(t.addr);
    if (t.kind == TextKind::FunctionStart) {
      it->second.annotations.push_back(".func " + label->name);
    } else if (t.kind == TextKind::FunctionEnd) {
      auto owner = std::upper_bound(starts.begin(), starts.end(), t.addr);
      if (owner == starts.begin()) {
        orphan_ends.push_back(t.addr);
      } else {
        ends_by_function[*std::prev(owner)].push_back(t.addr);
      }
    }
  }

  // Block labels cover BasicBlock records plus implied branch targets.
  for (const auto& [addr, label] : lp.labels.entries()) {
    auto it = lp.instructions.find(addr);
    if (label.kind == LabelKind::Block && it != lp.instructions.end()) it->second.annotations.push_back(label.name + ":");
  }

  for (auto& [fn, ends] : ends_by_function) {
    for (std::size_t i = 0; i < ends.size(); ++i) {
      lp.instructions.at(ends[i]).closing.push_back(i + 1 == ends.size() ? ".endfunc" : ".fend");
    }
  }
  for (Address a : orphan_ends) lp.instructions.at(a).closing.push_back(".fend");

  for (auto& [addr, insn] : lp.instructions) {
    for (auto& op : insn.operands) {
      const auto* p = std::get_if<isa::PcRel>(&op);
      if (p == nullptr) continue;
      if (const auto target = lp.labels.lookup(p->target)) {
        op = isa::SymbolRef{target->first, static_cast<std::int64_t>(target->second)};
      }
    }
  }
}

void stack_symbolize(LiftedProgram& lp) {
  const auto starts = function_starts(lp.meta);
  for (const auto& rec : lp.meta.stack) {
    const Address entry = rec.function_entry;
    auto first = lp.instructions.find(entry);
    auto second = first == lp.instructions.end() ? first : std::next(first);
    const bool frame = first != lp.instructions.end() && second != lp.instructions.end() &&
                       first->second.mnemonic == "push" &&
                       first->second.operands == std::vector<isa::Operand>{isa::Register{isa::kRbp}} &&
                       second->second.mnemonic == "mov" &&
                       second->second.operands == std::vector<isa::Operand>{isa::Register{isa::kRbp}, isa::Register{isa::kRsp}};
    if (!frame) {
      lp.diagnostics.push_back(Diagnostic{Severity::Warning, DiagKind::StackDiagnostic, entry,
                                          "function at " + hex(entry) + " has no frame pointer; stack accesses stay numeric",
                                          ErrorKind::InvalidMetadata});
      continue;
    }

    const Address limit = function_limit(lp, starts, entry);
    for (auto it = lp.instructions.lower_bound(entry); it != lp.instructions.end() && it->first < limit; ++it) {
      for (auto& op : it->second.operands) {
        auto* m = std::get_if<isa::MemRef>(&op);
        if (m == nullptr || m->rip_relative || !m->symbol.empty() || m->base != isa::kRbp) continue;
        // rbp sits 8 bytes below the entry stack pointer after the prologue.
        const std::int64_t depth = 8 - m->displacement;
        auto slot = std::lower_bound(rec.offsets.begin(), rec.offsets.end(), depth > 0 ? static_cast<std::uint64_t>(depth) : 0);
        if (depth <= 0 || slot == rec.offsets.end()) {
          lp.diagnostics.push_back(Diagnostic{Severity::Warning, DiagKind::StackAccessOutsideSlots, it->first,
                                              "stack access at " + hex(it->first) + " lies outside every slot",
                                              ErrorKind::InvalidMetadata});
          continue;
        }
        m->symbol = "s" + std::to_string(*slot);
        m->displacement = static_cast<std::int64_t>(*slot) - depth;
      }
    }
  }
}

void data_symbolize(LiftedProgram& lp) {
  std::map<Address, Earmark> pending = lp.earmarks;

  Address previous_end = 0;
  for (const auto& [addr, mark] : lp.earmarks) {
    if (addr < previous_end) report(lp, ErrorKind::InvalidMetadata, addr, "data pointers at " + hex(addr) + " overlap");
    previous_end = std::max(previous_end, addr + mark.width);
  }

  for (const auto& sec : lp.sections) {
    if (sec.flags.exec || sec.size == 0) continue;

    std::vector<Address> bounds{sec.vaddr};
    for (const auto& d : lp.meta.data) {
      if (d.addr > sec.vaddr && d.addr < sec.end()) bounds.push_back(d.addr);
    }
    std::sort(bounds.begin(), bounds.end());

    for (std::size_t i = 0; i < bounds.size(); ++i) {
      Variable var;
      var.address = bounds[i];
      const Address end = i + 1 < bounds.size() ? bounds[i + 1] : sec.end();
      var.size = end - var.address;
      if (const Label* l = lp.labels.at(var.address)) var.label = l->name;

      if (sec.nobits) {
        var.payload.push_back(Zeroes{var.size});
        for (auto it = pending.lower_bound(var.address); it != pending.end() && it->first < end;) {
          report(lp, ErrorKind::InvalidMetadata, it->first, "pointer inside zero-initialized data at " + hex(it->first));
          it = pending.erase(it);
        }
        lp.variables.push_back(std::move(var));
        continue;
      }

      const auto bytes = lp.image.read(var.address, var.size);
      RawBytes raw;
      auto flush = [&] {
        if (!raw.bytes.empty()) var.payload.push_back(std::move(raw));
        raw = RawBytes{};
      };
      Address pc = var.address;
      while (pc < end) {
        auto mark = pending.find(pc);
        if (mark != pending.end()) {
          if (pc + mark->second.width > end) {
            report(lp, ErrorKind::PointerStraddle,
                   pc, "pointer at " + hex(pc) + " crosses the end of variable " + (var.label.empty() ? hex(var.address) : var.label) +
                       " at " + hex(end));
            pending.erase(mark);
            continue;
          }
          flush();
          var.payload.push_back(mark->second.payload);
          pc += mark->second.width;
          pending.erase(mark);
          continue;
        }
        raw.bytes.push_back(bytes[pc - var.address]);
        ++pc;
      }
      flush();
      lp.variables.push_back(std::move(var));
    }
  }

  for (const auto& [addr, mark] : pending) {
    report(lp, ErrorKind::InvalidMetadata, addr, "data pointer at " + hex(addr) + " is not inside a data section");
  }
}

namespace {

// Instruction starts that must carry a label even without a BasicBlock
// record: direct jump targets and code addresses stored as pointers.
std::set<Address> implied_blocks(const LiftedProgram& lp) {
  std::set<Address> out;
  auto mark = [&](Address a) {
    if (lp.raw.count(a)) out.insert(a);
  };
  for (const auto& [addr, insn] : lp.raw) {
    const auto flow = isa::instruction_class(insn);
    if ((flow.kind == isa::FlowKind::Jump || flow.kind == isa::FlowKind::ConditionalJump) && flow.target) mark(*flow.target);
  }
  for (const auto& rec : lp.meta.pointers) {
    if (const auto* op = std::get_if<OperandPointer>(&rec)) mark(op->target);
    if (const auto* dp = std::get_if<DataPointer>(&rec)) mark(dp->target);
    if (const auto* dd = std::get_if<DataDiff>(&rec)) {
      mark(dd->minuend);
      mark(dd->subtrahend);
    }
  }
  return out;
}

}  // namespace

LiftedProgram lift_prepare(const ElfImage& image, const EllfMetadata& meta, LiftMode mode) {
  LiftedProgram lp;
  lp.mode = mode;
  lp.meta = meta;
  // Empty sections are kept so the emitted text still declares them.
  for (const auto& s : image.sections) {
    if (s.flags.alloc) lp.sections.push_back({s.name, s.vaddr, s.size, s.flags, s.kind == SectionKind::Nobits});
  }
  std::stable_sort(lp.sections.begin(), lp.sections.end(), [](const auto& a, const auto& b) { return a.vaddr < b.vaddr; });

  for (auto& d : validate_metadata(meta, image)) {
    if (mode == LiftMode::Strict) fail(ErrorKind::InvalidMetadata, format_diagnostic(d));
    d.severity = Severity::Warning;
    lp.diagnostics.push_back(std::move(d));
  }

  lp.image = load_image(image);
  lp.raw = lift_unsymbolized(lp.image, meta.instruction_regions);
  lp.instructions = lp.raw;
  lp.labels = generate_labels(meta, lp.sections, implied_blocks(lp));
  coarse_symbolize(lp);
  return lp;
}

LiftedProgram lift(const ElfImage& image, const EllfMetadata& meta, LiftMode mode, std::array<SymbolizeStep, 3> order) {
  LiftedProgram lp = lift_prepare(image, meta, mode);
  for (auto step : order) {
    switch (step) {
      case SymbolizeStep::Text: text_symbolize(lp); break;
      case SymbolizeStep::Stack: stack_symbolize(lp); break;
      case SymbolizeStep::Data: data_symbolize(lp); break;
    }
  }
  build_cfgs(lp);
  return lp;
}

}  // namespace ellf
