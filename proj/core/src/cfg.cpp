#include <algorithm>
#include <set>

#include "ellf/lifter.hpp"

namespace ellf {

namespace {

struct FunctionView {
  Address entry = 0;
  Address limit = 0;
  std::set<Address> blocks;   // labeled block starts: valid jump targets
  std::set<Address> leaders;  // blocks plus instructions after a jump or exit
};

bool ends_block(isa::FlowKind k) {
  switch (k) {
    case isa::FlowKind::Jump:
    case isa::FlowKind::ConditionalJump:
    case isa::FlowKind::IndirectJump:
    case isa::FlowKind::Return:
    case isa::FlowKind::Halt: return true;
    default: return false;
  }
}

}  // namespace

void build_cfgs(LiftedProgram& lp) {
  std::vector<Address> entries;
  std::set<Address> ends;
  std::set<Address> block_marks;
  for (const auto& t : lp.meta.text) {
    if (t.kind == TextKind::FunctionStart) entries.push_back(t.addr);
    if (t.kind == TextKind::FunctionEnd) ends.insert(t.addr);
  }
  for (const auto& [addr, label] : lp.labels.entries()) {
    if ((label.kind == LabelKind::Block || label.kind == LabelKind::Function) && lp.raw.count(addr)) block_marks.insert(addr);
  }

  std::vector<FunctionView> functions;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    FunctionView fn;
    fn.entry = entries[i];
    const SectionInfo* sec = lp.section_containing(fn.entry);
    fn.limit = sec ? sec->end() : fn.entry;
    if (i + 1 < entries.size() && entries[i + 1] < fn.limit) fn.limit = entries[i + 1];
    for (auto it = block_marks.lower_bound(fn.entry); it != block_marks.end() && *it < fn.limit; ++it) fn.blocks.insert(*it);
    fn.blocks.insert(fn.entry);
    fn.leaders = fn.blocks;
    for (auto it = lp.raw.lower_bound(fn.entry); it != lp.raw.end() && it->first < fn.limit; ++it) {
      const Address next = it->first + it->second.length;
      if (next >= fn.limit || !lp.raw.count(next)) continue;
      if (ends.count(it->first) || ends_block(isa::instruction_class(it->second).kind)) fn.leaders.insert(next);
    }
    functions.push_back(std::move(fn));
  }

  auto owner_of = [&](Address a) -> const FunctionView* {
    for (const auto& fn : functions) {
      if (a >= fn.entry && a < fn.limit) return &fn;
    }
    return nullptr;
  };

  lp.cfgs.clear();
  for (const auto& fn : functions) {
    if (!lp.raw.count(fn.entry)) continue;

    // Tables this function loads: targets of its operand pointers.
    std::set<Address> referenced;
    for (const auto& rec : lp.meta.pointers) {
      const auto* op = std::get_if<OperandPointer>(&rec);
      if (op && op->instr_addr >= fn.entry && op->instr_addr < fn.limit) referenced.insert(op->target);
    }
    std::set<Address> table_targets;
    for (const auto& rec : lp.meta.pointers) {
      const auto* dd = std::get_if<DataDiff>(&rec);
      if (dd && referenced.count(dd->subtrahend) && fn.blocks.count(dd->minuend)) table_targets.insert(dd->minuend);
    }

    Cfg cfg;
    cfg.function_entry = fn.entry;
    for (auto b = fn.leaders.begin(); b != fn.leaders.end(); ++b) {
      const Address block_limit = std::next(b) == fn.leaders.end() ? fn.limit : *std::next(b);
      CfgBlock block;
      block.start = *b;

      std::set<Address> succ;
      auto jump_target = [&](Address from, Address target) {
        if (fn.blocks.count(target)) {
          succ.insert(target);
          return;
        }
        const FunctionView* other = owner_of(target);
        if (other != nullptr && other != &fn && other->blocks.count(target)) {
          block.exit = true;  // tail call
          return;
        }
        if (lp.mode == LiftMode::Strict) {
          fail(ErrorKind::TargetOutsideFunction, "jump at " + hex(from) + " to " + hex(target) + " has no block label");
        }
        lp.diagnostics.push_back(Diagnostic{Severity::Warning, DiagKind::LiftError, from,
                                            "jump to unlabeled address " + hex(target), ErrorKind::TargetOutsideFunction});
        block.exit = true;
      };

      const isa::Instruction* last = nullptr;
      bool ended = false;
      for (auto it = lp.raw.find(*b); it != lp.raw.end() && it->first < block_limit; ++it) {
        last = &it->second;
        if (ends.count(it->first)) {
          ended = true;
          break;
        }
        const isa::Flow flow = isa::instruction_class(it->second);
        switch (flow.kind) {
          case isa::FlowKind::Jump:
          case isa::FlowKind::ConditionalJump:
            if (flow.target) jump_target(it->first, *flow.target);
            break;
          case isa::FlowKind::IndirectJump:
            if (table_targets.empty()) {
              succ.insert(fn.blocks.begin(), fn.blocks.end());
            } else {
              succ.insert(table_targets.begin(), table_targets.end());
            }
            break;
          case isa::FlowKind::Return:
          case isa::FlowKind::Halt:
            block.exit = true;
            break;
          default:
            break;
        }
        auto next = std::next(it);
        if (next == lp.raw.end() || next->first != it->first + it->second.length) break;
      }
      block.end = last ? last->address + last->length : block.start;

      if (ended) {
        block.exit = true;
      } else if (last) {
        const auto kind = isa::instruction_class(*last).kind;
        if (kind == isa::FlowKind::Fallthrough || kind == isa::FlowKind::Call || kind == isa::FlowKind::IndirectCall ||
            kind == isa::FlowKind::ConditionalJump) {
          if (block.end < fn.limit && fn.leaders.count(block.end)) {
            succ.insert(block.end);
          } else {
            block.exit = true;
          }
        }
      }
      block.successors.assign(succ.begin(), succ.end());
      cfg.blocks.push_back(std::move(block));
    }
    lp.cfgs.push_back(std::move(cfg));
  }
}

}  // namespace ellf
