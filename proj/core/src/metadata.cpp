#include "ellf/metadata.hpp"

#include <algorithm>
#include <tuple>

namespace ellf {

Address pointer_key(const PointerRecord& record) {
  return std::visit(
      [](const auto& r) -> Address {
        using T = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<T, OperandPointer>) {
          return r.instr_addr;
        } else {
          return r.addr;
        }
      },
      record);
}

std::uint8_t pointer_kind(const PointerRecord& record) {
  if (std::holds_alternative<OperandPointer>(record)) return 0;
  if (std::holds_alternative<DataPointer>(record)) return 1;
  return std::get<DataDiff>(record).width == 4 ? 3 : 2;
}

std::string_view to_string(TextKind kind) {
  switch (kind) {
    case TextKind::BasicBlock: return "basic_block";
    case TextKind::FunctionStart: return "function_start";
    case TextKind::FunctionEnd: return "function_end";
  }
  return "unknown";
}

namespace {

auto pointer_order(const PointerRecord& r) {
  const std::uint32_t index = std::holds_alternative<OperandPointer>(r) ? std::get<OperandPointer>(r).operand_index : 0;
  return std::make_tuple(pointer_key(r), pointer_kind(r), index);
}

[[noreturn]] void violated(const std::string& what, Address at) {
  fail(ErrorKind::InvariantViolation, what + " at " + hex(at));
}

}  // namespace

void canonicalize(EllfMetadata& meta) {
  std::ranges::sort(meta.instruction_regions, {}, &InstructionRegion::start);
  std::ranges::sort(meta.pointers, [](const auto& a, const auto& b) { return pointer_order(a) < pointer_order(b); });
  std::ranges::sort(meta.text, [](const TextRecord& a, const TextRecord& b) {
    return std::tie(a.addr, a.kind) < std::tie(b.addr, b.kind);
  });
  std::ranges::sort(meta.stack, {}, &StackRecord::function_entry);
  for (auto& s : meta.stack) std::ranges::sort(s.offsets);
  std::ranges::sort(meta.data, {}, &DataRecord::addr);
}

void check_invariants(const EllfMetadata& meta) {
  if (meta.version != kMetadataVersion) {
    fail(ErrorKind::InvariantViolation, "metadata version must be " + std::to_string(kMetadataVersion));
  }

  for (std::size_t i = 0; i < meta.instruction_regions.size(); ++i) {
    const auto& r = meta.instruction_regions[i];
    if (r.count == 0) violated("instruction region with zero count", r.start);
    if (i > 0 && r.start <= meta.instruction_regions[i - 1].start) violated("instruction regions unsorted or duplicated", r.start);
  }

  for (std::size_t i = 0; i < meta.pointers.size(); ++i) {
    const auto& p = meta.pointers[i];
    if (const auto* d = std::get_if<DataDiff>(&p); d && d->width != 4 && d->width != 8) {
      violated("pointer difference width must be 4 or 8", d->addr);
    }
    if (i == 0) continue;
    const auto& prev = meta.pointers[i - 1];
    if (!(pointer_order(prev) < pointer_order(p))) violated("pointer records unsorted or duplicated", pointer_key(p));
    if (pointer_key(prev) == pointer_key(p) && (pointer_kind(prev) != 0 || pointer_kind(p) != 0)) {
      violated("data pointer record shares its address with another record", pointer_key(p));
    }
  }

  bool seen_function_start = false;
  for (std::size_t i = 0; i < meta.text.size(); ++i) {
    const auto& t = meta.text[i];
    if (i > 0) {
      const auto& prev = meta.text[i - 1];
      if (std::tie(prev.addr, prev.kind) >= std::tie(t.addr, t.kind)) violated("text records unsorted or duplicated", t.addr);
    }
    if (t.kind == TextKind::FunctionStart) seen_function_start = true;
    if (t.kind == TextKind::FunctionEnd && !seen_function_start) violated("function end before any function start", t.addr);
  }

  for (std::size_t i = 0; i < meta.stack.size(); ++i) {
    const auto& s = meta.stack[i];
    if (i > 0 && s.function_entry <= meta.stack[i - 1].function_entry) {
      violated("stack records unsorted or duplicated", s.function_entry);
    }
    if (s.offsets.empty()) violated("stack record without offsets", s.function_entry);
    for (std::size_t j = 0; j < s.offsets.size(); ++j) {
      if (s.offsets[j] == 0) violated("stack offset must be positive", s.function_entry);
      if (j > 0 && s.offsets[j] <= s.offsets[j - 1]) violated("stack offsets unsorted or duplicated", s.function_entry);
    }
  }

  for (std::size_t i = 0; i < meta.data.size(); ++i) {
    const auto& d = meta.data[i];
    if (d.size == 0) violated("data record with zero size", d.addr);
    if (d.addr + d.size < d.addr) violated("data record wraps the address space", d.addr);
    if (i > 0) {
      const auto& prev = meta.data[i - 1];
      if (d.addr <= prev.addr) violated("data records unsorted or duplicated", d.addr);
      if (d.addr < prev.addr + prev.size) violated("data records overlap", d.addr);
    }
  }
}

}  // namespace ellf
