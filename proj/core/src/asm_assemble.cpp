#include <algorithm>
#include <set>

#include "ellf/asm.hpp"

namespace ellf {

namespace {

constexpr Address kAutoAlign = 16;
constexpr Address kPageSize = 0x1000;

bool starts_with(std::string_view s, std::string_view prefix) { return s.substr(0, prefix.size()) == prefix; }

struct SectionKindInfo {
  SectionFlags flags;
  bool nobits = false;
};

SectionKindInfo classify(std::string_view name) {
  if (starts_with(name, ".text")) return {{true, true, false}, false};
  if (starts_with(name, ".bss")) return {{true, false, true}, true};
  if (starts_with(name, ".data")) return {{true, false, true}, false};
  return {{true, false, false}, false};
}

struct Layout {
  const AsmSection* src = nullptr;
  SectionKindInfo kind;
  Address base = 0;
  std::uint64_t size = 0;
  std::vector<std::uint64_t> offsets;  // per item
};

[[noreturn]] void fail_at(ErrorKind kind, int line, const std::string& msg) {
  fail(kind, "line " + std::to_string(line) + ": " + msg);
}

class Assembler {
 public:
  Assembler(const AsmProgram& prog, const AsmOptions& options) : prog_(prog), options_(options) {}

  AsmOutput run() {
    collect_slots();
    size_pass();
    place_sections();
    resolve_symbols();
    emit_pass();
    return finish();
  }

 private:
  void collect_slots() {
    for (const auto& sec : prog_.sections) {
      for (const auto& item : sec.items) {
        if (const auto* s = std::get_if<SlotDef>(&item.node)) slots_[s->function][s->name] = s->offset;
      }
    }
  }

  // Stack slot names inside register-based operands become displacements.
  std::vector<isa::Operand> lower_slots(const Instr& ins, int line) const {
    std::vector<isa::Operand> ops = ins.operands;
    for (auto& op : ops) {
      auto* m = std::get_if<isa::MemRef>(&op);
      if (m == nullptr || m->rip_relative || m->symbol.empty()) continue;
      auto fn = slots_.find(function_);
      const auto* slot = fn == slots_.end() ? nullptr : [&]() -> const std::uint64_t* {
        auto it = fn->second.find(m->symbol);
        return it == fn->second.end() ? nullptr : &it->second;
      }();
      if (slot == nullptr) {
        fail_at(ErrorKind::UndefinedLabel, line, "stack slot " + m->symbol + " is not defined for function " +
                                                     (function_.empty() ? std::string("<none>") : function_));
      }
      m->displacement += 8 - static_cast<std::int64_t>(*slot);
      m->symbol.clear();
    }
    return ops;
  }

  std::uint64_t instr_size(const Instr& ins, int line) {
    auto ops = lower_slots(ins, line);
    for (auto& op : ops) {
      if (std::holds_alternative<isa::PcRel>(op)) op = isa::PcRel{0};
    }
    try {
      return isa::encode_one(ins.mnemonic, ops, 0, [](std::string_view) -> Address { return 0; }).size();
    } catch (const Error& e) {
      fail_at(e.kind(), line, e.message());
    }
  }

  void size_pass() {
    for (const auto& sec : prog_.sections) {
      Layout l;
      l.src = &sec;
      l.kind = classify(sec.name);
      std::uint64_t off = 0;
      for (const auto& item : sec.items) {
        l.offsets.push_back(off);
        const auto& n = item.node;
        if (l.kind.nobits && !std::holds_alternative<LabelDef>(n) && !std::holds_alternative<DataZero>(n) &&
            !std::holds_alternative<SizeDef>(n) && !std::holds_alternative<SetDef>(n)) {
          fail_at(ErrorKind::SyntaxError, item.line, "only labels and .zero are allowed in " + sec.name);
        }
        if (const auto* f = std::get_if<FuncBegin>(&n)) function_ = f->name;
        if (const auto* ins = std::get_if<Instr>(&n)) off += instr_size(*ins, item.line);
        if (const auto* b = std::get_if<DataBytes>(&n)) off += b->bytes.size();
        if (const auto* v = std::get_if<DataValue>(&n)) off += v->width;
        if (const auto* z = std::get_if<DataZero>(&n)) off += z->size;
      }
      l.size = off;
      layouts_.push_back(std::move(l));
    }
    function_.clear();
  }

  void place_sections() {
    auto align = [](Address a, Address to) { return (a + to - 1) / to * to; };
    Address text_cursor = options_.base_text;
    for (auto& l : layouts_) {
      if (!l.kind.flags.exec) continue;
      if (l.src->base) {
        l.base = *l.src->base;
        continue;
      }
      l.base = align(text_cursor, kAutoAlign);
      text_cursor = l.base + l.size;
    }
    // Without an explicit data base, data follows the code on the next page.
    Address data_cursor = options_.base_data ? *options_.base_data : align(text_cursor, kPageSize);
    for (auto& l : layouts_) {
      if (l.kind.flags.exec) continue;
      if (l.src->base) {
        l.base = *l.src->base;
        continue;
      }
      l.base = align(data_cursor, kAutoAlign);
      data_cursor = l.base + l.size;
    }
    std::vector<const Layout*> sorted;
    for (const auto& l : layouts_) sorted.push_back(&l);
    std::sort(sorted.begin(), sorted.end(), [](const auto* a, const auto* b) { return a->base < b->base; });
    for (std::size_t i = 1; i < sorted.size(); ++i) {
      const auto* prev = sorted[i - 1];
      const auto* cur = sorted[i];
      if (prev->size > 0 && cur->size > 0 && cur->base < prev->base + prev->size) {
        fail(ErrorKind::SectionOverlap, "section " + cur->src->name + " at " + hex(cur->base) + " overlaps " + prev->src->name);
      }
    }
  }

  void resolve_symbols() {
    std::vector<std::pair<const SetDef*, int>> sets;
    for (const auto& l : layouts_) {
      for (std::size_t i = 0; i < l.src->items.size(); ++i) {
        const auto& n = l.src->items[i].node;
        if (const auto* d = std::get_if<LabelDef>(&n)) symbols_[d->name] = l.base + l.offsets[i];
        if (const auto* f = std::get_if<FuncBegin>(&n)) symbols_[f->name] = l.base + l.offsets[i];
        if (const auto* s = std::get_if<SetDef>(&n)) sets.emplace_back(s, l.src->items[i].line);
      }
    }
    // .set may refer to another .set; resolve until nothing changes.
    std::size_t remaining = sets.size();
    while (remaining > 0) {
      std::size_t progressed = 0;
      for (const auto& [s, line] : sets) {
        if (symbols_.count(s->name)) continue;
        auto it = symbols_.find(s->label);
        if (it == symbols_.end()) continue;
        symbols_[s->name] = it->second + static_cast<Address>(s->offset);
        ++progressed;
      }
      if (progressed == 0) {
        for (const auto& [s, line] : sets) {
          if (!symbols_.count(s->name)) fail_at(ErrorKind::UndefinedLabel, line, "undefined label " + s->label);
        }
      }
      remaining -= progressed;
    }
  }

  Address symbol(const std::string& name, int line) const {
    auto it = symbols_.find(name);
    if (it == symbols_.end()) fail_at(ErrorKind::UndefinedLabel, line, "undefined label " + name);
    return it->second;
  }

  static void put_le(std::vector<std::uint8_t>& out, std::uint64_t v, std::size_t width) {
    for (std::size_t i = 0; i < width; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }

  void emit_pass() {
    std::set<Address> function_starts;
    std::set<Address> block_candidates;
    std::set<Address> instruction_starts;

    for (const auto& l : layouts_) {
      ElfSectionSpec spec;
      spec.name = l.src->name;
      spec.vaddr = l.base;
      spec.flags = l.kind.flags;
      spec.nobits = l.kind.nobits;
      spec.nobits_size = l.kind.nobits ? l.size : 0;
      auto& bytes = spec.bytes;

      std::optional<Address> last_instr;
      std::optional<InstructionRegion> run;
      auto close_run = [&] {
        if (run) meta_.instruction_regions.push_back(*run);
        run.reset();
      };
      std::vector<Address> object_labels;
      std::map<std::string, std::uint64_t> sizes;

      for (std::size_t i = 0; i < l.src->items.size(); ++i) {
        const auto& item = l.src->items[i];
        const Address at = l.base + l.offsets[i];
        const auto& n = item.node;

        if (const auto* d = std::get_if<LabelDef>(&n)) {
          if (l.kind.flags.exec) {
            if (!starts_with(d->name, ".Lsec_")) block_candidates.insert(at);
          } else if (!starts_with(d->name, ".L")) {
            object_labels.push_back(at);
          }
        } else if (const auto* f = std::get_if<FuncBegin>(&n)) {
          function_ = f->name;
          if (l.kind.flags.exec) function_starts.insert(at);
        } else if (std::holds_alternative<FuncEnd>(n)) {
          if (!last_instr) fail_at(ErrorKind::SyntaxError, item.line, "function end without a preceding instruction");
          meta_.text.push_back({*last_instr, TextKind::FunctionEnd});
        } else if (const auto* ins = std::get_if<Instr>(&n)) {
          assemble_instr(*ins, item.line, at, bytes);
          if (!l.kind.flags.exec) continue;
          last_instr = at;
          instruction_starts.insert(at);
          if (run) {
            ++run->count;
          } else {
            run = InstructionRegion{at, 1};
          }
        } else if (const auto* b = std::get_if<DataBytes>(&n)) {
          if (!b->bytes.empty()) close_run();
          bytes.insert(bytes.end(), b->bytes.begin(), b->bytes.end());
        } else if (const auto* v = std::get_if<DataValue>(&n)) {
          close_run();
          assemble_value(*v, item.line, at, bytes);
        } else if (const auto* z = std::get_if<DataZero>(&n)) {
          if (z->size > 0) close_run();
          if (!l.kind.nobits) bytes.insert(bytes.end(), z->size, 0);
        } else if (const auto* s = std::get_if<SizeDef>(&n)) {
          sizes[s->label] = s->size;
          size_lines_[s->label] = item.line;
        } else if (const auto* s = std::get_if<SetDef>(&n)) {
          const Address a = symbol(s->name, item.line);
          if (!l.kind.flags.exec && !starts_with(s->name, ".L")) set_objects_.push_back(a);
        }
      }
      close_run();
      if (!l.kind.nobits && bytes.size() != l.size) fail(ErrorKind::InvariantViolation, "layout size changed between passes");

      section_specs_.push_back(std::move(spec));
      for (const auto& [label, size] : sizes) size_overrides_[symbol(label, size_lines_[label])] = size;
      section_objects_.push_back(std::move(object_labels));
    }

    for (Address a : function_starts) meta_.text.push_back({a, TextKind::FunctionStart});
    for (Address a : block_candidates) {
      if (instruction_starts.count(a) && !function_starts.count(a)) meta_.text.push_back({a, TextKind::BasicBlock});
    }
  }

  void assemble_instr(const Instr& ins, int line, Address at, std::vector<std::uint8_t>& out) {
    const auto ops = lower_slots(ins, line);
    std::vector<std::uint8_t> encoded;
    try {
      encoded = isa::encode_one(ins.mnemonic, ops, at, [&](std::string_view name) { return symbol(std::string(name), line); });
    } catch (const Error& e) {
      if (starts_with(e.message(), "line ")) throw;
      fail_at(e.kind(), line, e.message());
    }
    out.insert(out.end(), encoded.begin(), encoded.end());

    // Direct branch targets are carried by the text records.
    isa::Instruction probe;
    probe.mnemonic = ins.mnemonic;
    probe.operands = ops;
    const auto flow = isa::instruction_class(probe);
    const bool branch = flow.kind == isa::FlowKind::Jump || flow.kind == isa::FlowKind::ConditionalJump ||
                        flow.kind == isa::FlowKind::Call;
    for (std::uint32_t k = 0; k < ops.size(); ++k) {
      if (branch && k == 0) continue;
      if (const auto* s = std::get_if<isa::SymbolRef>(&ops[k])) {
        meta_.pointers.push_back(OperandPointer{at, k, symbol(s->label, line) + static_cast<Address>(s->offset)});
      } else if (const auto* m = std::get_if<isa::MemRef>(&ops[k]); m && m->rip_relative && !m->symbol.empty()) {
        meta_.pointers.push_back(OperandPointer{at, k, symbol(m->symbol, line) + static_cast<Address>(m->displacement)});
      }
    }
  }

  void assemble_value(const DataValue& v, int line, Address at, std::vector<std::uint8_t>& out) {
    std::int64_t value = v.number;
    if (v.is_pointer()) {
      const Address target = symbol(v.label, line) + static_cast<Address>(v.offset);
      meta_.pointers.push_back(DataPointer{at, target});
      value = static_cast<std::int64_t>(target);
    } else if (v.is_diff()) {
      const Address minuend = symbol(v.label, line) + static_cast<Address>(v.offset);
      const Address subtrahend = symbol(v.subtrahend, line) + static_cast<Address>(v.subtrahend_offset);
      meta_.pointers.push_back(DataDiff{at, minuend, subtrahend, v.width});
      value = static_cast<std::int64_t>(minuend - subtrahend);
      if (v.width == 4 && (value < INT32_MIN || value > INT32_MAX)) {
        fail_at(ErrorKind::RangeOverflow, line, "difference does not fit in 32 bits");
      }
    } else if (v.width == 4 && (value < INT32_MIN || value > static_cast<std::int64_t>(UINT32_MAX))) {
      fail_at(ErrorKind::RangeOverflow, line, ".long value out of range");
    }
    put_le(out, static_cast<std::uint64_t>(value), v.width);
  }

  // Labelled objects in data sections; each runs to the next one or the section end.
  void build_data_records() {
    for (std::size_t i = 0; i < layouts_.size(); ++i) {
      const auto& l = layouts_[i];
      if (l.kind.flags.exec) continue;
      std::set<Address> starts(section_objects_[i].begin(), section_objects_[i].end());
      for (Address a : set_objects_) {
        if (a >= l.base && a < l.base + l.size) starts.insert(a);
      }
      for (auto it = starts.begin(); it != starts.end(); ++it) {
        if (*it >= l.base + l.size) continue;
        const Address next = std::next(it) == starts.end() ? l.base + l.size : std::min(*std::next(it), l.base + l.size);
        std::uint64_t size = next - *it;
        if (auto o = size_overrides_.find(*it); o != size_overrides_.end()) size = o->second;
        if (size > 0) meta_.data.push_back({*it, size});
      }
    }
  }

  void build_stack_records() {
    std::map<Address, std::set<std::uint64_t>> by_function;
    for (const auto& sec : prog_.sections) {
      for (const auto& item : sec.items) {
        const auto* s = std::get_if<SlotDef>(&item.node);
        if (s) by_function[symbol(s->function, item.line)].insert(s->offset);
      }
    }
    for (const auto& [fn, offsets] : by_function) meta_.stack.push_back({fn, {offsets.begin(), offsets.end()}});
  }

  AsmOutput finish() {
    build_data_records();
    build_stack_records();
    canonicalize(meta_);
    check_invariants(meta_);

    Address entry = 0;
    if (auto it = symbols_.find("_start"); it != symbols_.end()) {
      entry = it->second;
    } else {
      for (const auto& l : layouts_) {
        if (l.kind.flags.exec) {
          entry = l.base;
          break;
        }
      }
    }

    const auto plain = write_elf(entry, section_specs_);
    AsmOutput out;
    out.elf = inject_section(read_elf(plain), kEllfSectionName, encode_metadata(meta_));
    out.meta = std::move(meta_);
    out.symbols = std::move(symbols_);
    return out;
  }

  const AsmProgram& prog_;
  AsmOptions options_;
  std::vector<Layout> layouts_;
  std::map<std::string, std::map<std::string, std::uint64_t>> slots_;
  std::map<std::string, Address> symbols_;
  std::string function_;
  EllfMetadata meta_;
  std::vector<ElfSectionSpec> section_specs_;
  std::vector<std::vector<Address>> section_objects_;
  std::vector<Address> set_objects_;
  std::map<Address, std::uint64_t> size_overrides_;
  std::map<std::string, int> size_lines_;
};

}  // namespace

AsmOutput assemble(const AsmProgram& prog, const AsmOptions& options) { return Assembler(prog, options).run(); }

AsmOutput assemble_text(const std::string& text, const AsmOptions& options) {
  return assemble(parse_assembly(text), options);
}

}  // namespace ellf
