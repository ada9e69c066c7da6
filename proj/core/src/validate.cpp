#include "ellf/validate.hpp"

#include <algorithm>
#include <set>

namespace ellf {

std::vector<isa::Instruction> decode_regions(const std::vector<InstructionRegion>& regions, const MemoryImage& image) {
  std::vector<isa::Instruction> out;
  std::vector<InstructionRegion> sorted = regions;
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.start < b.start; });

  Address covered_until = 0;
  bool any = false;
  for (const auto& r : sorted) {
    if (any && r.start < covered_until) {
      fail(ErrorKind::RegionOverlap, "region at " + hex(r.start) + " starts inside the previous region");
    }
    Address pc = r.start;
    for (std::uint64_t i = 0; i < r.count; ++i) {
      try {
        auto insn = isa::decode_one(image, pc);
        pc += insn.length;
        out.push_back(std::move(insn));
      } catch (const Error& e) {
        fail(ErrorKind::RegionDecodeError,
             "region " + hex(r.start) + " instruction " + std::to_string(i) + " at " + hex(pc) + ": " + e.message());
      }
    }
    covered_until = pc;
    any = true;
  }
  return out;
}

namespace {

bool in_any_section(const ElfImage& img, Address a) {
  // One past the end still names the section (end-of-array pointers).
  for (const auto* s : img.alloc_sections()) {
    if (a >= s->vaddr && a <= s->end()) return true;
  }
  return false;
}

bool in_exec_section(const ElfImage& img, Address a) {
  const Section* s = img.section_containing(a);
  return s != nullptr && s->is_code();
}

}  // namespace

std::vector<Diagnostic> validate_metadata(const EllfMetadata& meta, const ElfImage& image) {
  std::vector<Diagnostic> diags;
  auto add = [&](DiagKind kind, Address addr, std::string msg) {
    diags.push_back(Diagnostic{Severity::Error, kind, addr, std::move(msg), ErrorKind::InvalidMetadata});
  };

  for (const auto& r : meta.instruction_regions) {
    if (!in_exec_section(image, r.start)) add(DiagKind::RangeDiagnostic, r.start, "region start outside executable code");
  }

  std::set<Address> starts;
  try {
    for (const auto& insn : decode_regions(meta.instruction_regions, load_image(image))) starts.insert(insn.address);
  } catch (const Error& e) {
    add(DiagKind::RegionDiagnostic, 0, e.message());
  }

  auto check_target = [&](Address at, Address target, const char* what) {
    if (!in_any_section(image, target)) add(DiagKind::RangeDiagnostic, at, std::string(what) + " " + hex(target) + " is outside every section");
  };
  for (const auto& p : meta.pointers) {
    if (const auto* op = std::get_if<OperandPointer>(&p)) {
      if (!starts.count(op->instr_addr)) add(DiagKind::AlignmentDiagnostic, op->instr_addr, "operand pointer not at an instruction start");
      check_target(op->instr_addr, op->target, "target");
    } else if (const auto* dp = std::get_if<DataPointer>(&p)) {
      check_target(dp->addr, dp->target, "target");
    } else {
      const auto& dd = std::get<DataDiff>(p);
      check_target(dd.addr, dd.minuend, "minuend");
      check_target(dd.addr, dd.subtrahend, "subtrahend");
    }
  }

  std::set<Address> function_starts;
  for (const auto& t : meta.text) {
    if (t.kind == TextKind::FunctionStart) function_starts.insert(t.addr);
    if (!in_exec_section(image, t.addr)) {
      add(DiagKind::RangeDiagnostic, t.addr, "text record outside executable code");
    } else if (!starts.count(t.addr)) {
      add(DiagKind::AlignmentDiagnostic, t.addr, "text record not at an instruction start");
    }
  }

  for (const auto& d : meta.data) {
    const Section* s = image.section_containing(d.addr);
    if (s == nullptr || !s->is_data() || d.addr + d.size > s->end()) {
      add(DiagKind::RangeDiagnostic, d.addr, "data record of " + std::to_string(d.size) + " bytes leaves its data section");
    }
  }

  for (const auto& st : meta.stack) {
    if (!function_starts.count(st.function_entry)) add(DiagKind::StackDiagnostic, st.function_entry, "stack record for a non-function");
  }
  return diags;
}

}  // namespace ellf
