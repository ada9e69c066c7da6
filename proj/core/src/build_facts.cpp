#include "ellf/build_facts.hpp"

#include <algorithm>
#include <map>
#include <set>

#include <json.hpp>

#include "ellf/isa.hpp"

namespace ellf {

using nlohmann::json;

namespace {

std::uint64_t to_u64(const json& v, const char* what) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    try {
      std::size_t used = 0;
      const auto value = std::stoull(s, &used, 0);
      if (used == s.size()) return value;
    } catch (const std::exception&) {
    }
  }
  fail(ErrorKind::BadJson, std::string("bad value for ") + what);
}

std::vector<std::uint64_t> to_list(const json& v, const char* what) {
  if (!v.is_array()) fail(ErrorKind::BadJson, std::string(what) + " must be an array");
  std::vector<std::uint64_t> out;
  for (const auto& e : v) out.push_back(to_u64(e, what));
  return out;
}

const json& field(const json& obj, const char* name) {
  if (!obj.is_object() || !obj.contains(name)) fail(ErrorKind::BadJson, std::string("missing field ") + name);
  return obj.at(name);
}

const json& array_or_empty(const json& root, const char* name) {
  static const json empty = json::array();
  if (!root.contains(name)) return empty;
  const json& v = root.at(name);
  if (!v.is_array()) fail(ErrorKind::BadJson, std::string(name) + " must be an array");
  return v;
}

RelocKind parse_kind(const std::string& s) {
  if (s == "abs64") return RelocKind::Abs64;
  if (s == "pc32") return RelocKind::Pc32;
  if (s == "diff32") return RelocKind::Diff32;
  fail(ErrorKind::BadJson, "unknown relocation kind " + s);
}

}  // namespace

BuildFacts build_facts_from_json(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorKind::BadJson, e.what());
  }
  if (!root.is_object()) fail(ErrorKind::BadJson, "build facts must be a JSON object");

  BuildFacts f;
  try {
    for (const auto& b : array_or_empty(root, "basic_blocks")) {
      f.basic_blocks.push_back({to_u64(field(b, "function_addr"), "function_addr"),
                                to_list(field(b, "block_offsets"), "block_offsets"),
                                to_list(field(b, "block_sizes"), "block_sizes")});
    }
    for (const auto& r : array_or_empty(root, "relocations")) {
      FactsRelocation rel;
      rel.addr = to_u64(field(r, "addr"), "addr");
      const auto& kind = field(r, "kind");
      if (!kind.is_string()) fail(ErrorKind::BadJson, "relocation kind must be a string");
      rel.kind = parse_kind(kind.get<std::string>());
      rel.target_addr = to_u64(field(r, "target_addr"), "target_addr");
      if (r.contains("subtrahend_addr") && !r.at("subtrahend_addr").is_null()) {
        rel.subtrahend_addr = to_u64(r.at("subtrahend_addr"), "subtrahend_addr");
      }
      f.relocations.push_back(rel);
    }
    for (const auto& v : array_or_empty(root, "variables")) {
      f.variables.push_back({to_u64(field(v, "addr"), "addr"), to_u64(field(v, "size"), "size")});
    }
    for (const auto& l : array_or_empty(root, "locals")) {
      f.locals.push_back({to_u64(field(l, "function_addr"), "function_addr"), to_list(field(l, "offsets"), "offsets")});
    }
    for (const auto& j : array_or_empty(root, "jump_tables")) {
      f.jump_tables.push_back({to_u64(field(j, "table_addr"), "table_addr"), to_u64(field(j, "entry_count"), "entry_count"),
                               to_u64(field(j, "entry_size"), "entry_size")});
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::BadJson, e.what());
  }
  return f;
}

bool FactsResult::has_errors() const {
  return std::any_of(diagnostics.begin(), diagnostics.end(), [](const auto& d) { return d.severity == Severity::Error; });
}

namespace {

struct Block {
  Address start = 0;
  Address end = 0;
  Address function = 0;
};

class FactsBuilder {
 public:
  FactsBuilder(const BuildFacts& facts, const MemoryImage& image) : facts_(facts), image_(image) {}

  FactsResult run() {
    collect_blocks();
    build_regions();
    build_text();
    build_pointers();
    build_data();
    build_stack();

    canonicalize(out_.meta);
    try {
      check_invariants(out_.meta);
    } catch (const Error& e) {
      fail(ErrorKind::InconsistentFacts, e.message());
    }
    return std::move(out_);
  }

 private:
  void diag(Severity sev, DiagKind kind, Address addr, std::string msg) {
    out_.diagnostics.push_back(Diagnostic{sev, kind, addr, std::move(msg), ErrorKind::InconsistentFacts});
  }

  void collect_blocks() {
    for (const auto& fn : facts_.basic_blocks) {
      if (fn.block_offsets.size() != fn.block_sizes.size()) {
        diag(Severity::Error, DiagKind::InconsistentFacts, fn.function_addr, "block offset and size lists differ in length");
        continue;
      }
      for (std::size_t i = 0; i < fn.block_offsets.size(); ++i) {
        if (fn.block_sizes[i] == 0) continue;
        const Address start = fn.function_addr + fn.block_offsets[i];
        blocks_.push_back({start, start + fn.block_sizes[i], fn.function_addr});
      }
    }
    std::sort(blocks_.begin(), blocks_.end(), [](const Block& a, const Block& b) { return a.start < b.start; });
  }

  // Contiguous blocks collapse into one region; the decoder supplies the count.
  void build_regions() {
    std::size_t i = 0;
    while (i < blocks_.size()) {
      const Address start = blocks_[i].start;
      Address end = blocks_[i].end;
      std::size_t j = i + 1;
      while (j < blocks_.size() && blocks_[j].start == end) end = blocks_[j++].end;
      if (j < blocks_.size() && blocks_[j].start < end) {
        diag(Severity::Error, DiagKind::InconsistentFacts, blocks_[j].start, "basic blocks overlap");
      }

      std::uint64_t count = 0;
      Address pc = start;
      try {
        while (pc < end) {
          auto insn = isa::decode_one(image_, pc);
          pc += insn.length;
          insns_.emplace(insn.address, std::move(insn));
          ++count;
        }
      } catch (const Error& e) {
        diag(Severity::Error, DiagKind::RegionDiagnostic, pc, e.message());
      }
      if (pc > end) diag(Severity::Error, DiagKind::RegionDiagnostic, end, "instruction runs past the end of its block");
      if (count > 0) out_.meta.instruction_regions.push_back({start, count});
      i = j;
    }
  }

  void build_text() {
    std::map<Address, std::vector<Block>> by_function;
    for (const auto& b : blocks_) by_function[b.function].push_back(b);

    for (const auto& [fn, blocks] : by_function) {
      out_.meta.text.push_back({blocks.front().start, TextKind::FunctionStart});
      for (std::size_t k = 1; k < blocks.size(); ++k) out_.meta.text.push_back({blocks[k].start, TextKind::BasicBlock});

      const Block& last = blocks.back();
      auto it = insns_.lower_bound(last.end);
      if (it == insns_.begin()) continue;
      --it;
      if (it->first >= last.start) out_.meta.text.push_back({it->first, TextKind::FunctionEnd});
    }
  }

  // Operand slot whose encoded field starts `pos` bytes into `insn`.
  std::optional<std::uint32_t> operand_at(const isa::Instruction& insn, std::uint64_t pos) const {
    for (std::uint32_t k = 0; k < insn.operands.size(); ++k) {
      const auto& op = insn.operands[k];
      if (pos == insn.disp_offset && insn.disp_offset != 0 && std::holds_alternative<isa::MemRef>(op)) return k;
      if (pos == insn.imm_offset && insn.imm_offset != 0 &&
          (std::holds_alternative<isa::Immediate>(op) || std::holds_alternative<isa::PcRel>(op))) {
        return k;
      }
    }
    return std::nullopt;
  }

  const isa::Instruction* instruction_containing(Address a) const {
    auto it = insns_.upper_bound(a);
    if (it == insns_.begin()) return nullptr;
    --it;
    return a < it->first + it->second.length ? &it->second : nullptr;
  }

  void build_pointers() {
    for (const auto& r : facts_.relocations) {
      if (r.kind == RelocKind::Diff32) {
        add_diff(r);
        continue;
      }
      if (const auto* insn = instruction_containing(r.addr)) {
        const auto idx = operand_at(*insn, r.addr - insn->address);
        if (!idx) {
          diag(Severity::Error, DiagKind::InconsistentFacts, r.addr, "relocation is not at an operand field");
          continue;
        }
        out_.meta.pointers.push_back(OperandPointer{insn->address, *idx, r.target_addr});
      } else if (r.kind == RelocKind::Abs64) {
        out_.meta.pointers.push_back(DataPointer{r.addr, r.target_addr});
      } else {
        diag(Severity::Error, DiagKind::InconsistentFacts, r.addr, "pc-relative relocation outside code");
      }
    }
  }

  void add_diff(const FactsRelocation& r) {
    for (const auto& t : facts_.jump_tables) {
      if (r.addr < t.table_addr || r.addr >= t.table_addr + t.entry_count * t.entry_size) continue;
      if (t.entry_size != 4 && t.entry_size != 8) {
        diag(Severity::Error, DiagKind::InconsistentFacts, t.table_addr, "jump table entries must be 4 or 8 bytes");
        return;
      }
      if (r.subtrahend_addr && *r.subtrahend_addr != t.table_addr) {
        diag(Severity::Warning, DiagKind::InconsistentFacts, r.addr, "subtrahend differs from the table base; using the base");
      }
      out_.meta.pointers.push_back(DataDiff{r.addr, r.target_addr, t.table_addr, static_cast<std::uint8_t>(t.entry_size)});
      return;
    }
    diag(Severity::Warning, DiagKind::InconsistentFacts, r.addr, "difference relocation outside any jump table dropped");
  }

  void build_data() {
    auto vars = facts_.variables;
    std::stable_sort(vars.begin(), vars.end(), [](const auto& a, const auto& b) { return a.addr < b.addr; });
    Address covered_until = 0;
    bool any = false;
    for (const auto& v : vars) {
      if (v.size == 0) continue;
      if (any && v.addr < covered_until) {
        diag(Severity::Warning, DiagKind::OverlapDropped, v.addr,
             "variable overlaps the one at " + hex(out_.meta.data.back().addr) + " and was dropped");
        continue;
      }
      out_.meta.data.push_back({v.addr, v.size});
      covered_until = v.addr + v.size;
      any = true;
    }
  }

  void build_stack() {
    for (const auto& l : facts_.locals) {
      std::set<std::uint64_t> offsets(l.offsets.begin(), l.offsets.end());
      if (offsets.empty()) continue;
      out_.meta.stack.push_back({l.function_addr, {offsets.begin(), offsets.end()}});
    }
  }

  const BuildFacts& facts_;
  const MemoryImage& image_;
  std::vector<Block> blocks_;
  std::map<Address, isa::Instruction> insns_;
  FactsResult out_;
};

}  // namespace

FactsResult from_build_facts(const BuildFacts& facts, const MemoryImage& image) { return FactsBuilder(facts, image).run(); }

}  // namespace ellf
