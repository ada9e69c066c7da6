#pragma once

#include <array>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "ellf/elf.hpp"
#include "ellf/isa.hpp"
#include "ellf/metadata.hpp"

namespace ellf {

enum class LiftMode { Strict, Lenient };

enum class LabelKind { Function, Block, Data, Anchor };

struct Label {
  std::string name;
  LabelKind kind = LabelKind::Anchor;

  bool operator==(const Label&) const = default;
};

struct SectionInfo {
  std::string name;
  Address vaddr = 0;
  std::uint64_t size = 0;
  SectionFlags flags;
  bool nobits = false;

  Address end() const { return vaddr + size; }
  bool operator==(const SectionInfo&) const = default;
};

struct StackSlot {
  std::string name;
  std::uint64_t offset = 0;

  bool operator==(const StackSlot&) const = default;
};

/// Address-derived names for everything the metadata identifies. Every
/// section has a label at its base, so lookups inside a section always
/// resolve.
class LabelMap {
 public:
  LabelMap() = default;
  explicit LabelMap(std::vector<SectionInfo> sections) : sections_(std::move(sections)) {}

  void add(Address addr, std::string name, LabelKind kind);
  const Label* at(Address addr) const;

  /// Nearest label at or below `addr` in the section holding it (or ending at
  /// it), with the offset from that label.
  std::optional<std::pair<std::string, std::uint64_t>> lookup(Address addr) const;

  const std::map<Address, Label>& entries() const { return labels_; }

  // Per-function stack slot constants, keyed by function entry.
  std::map<Address, std::vector<StackSlot>> slots;

  bool operator==(const LabelMap&) const = default;

 private:
  std::vector<SectionInfo> sections_;
  std::map<Address, Label> labels_;
  std::set<std::string> names_;
};

struct RawBytes {
  std::vector<std::uint8_t> bytes;
  bool operator==(const RawBytes&) const = default;
};

struct PointerPayload {
  std::string label;
  std::int64_t offset = 0;
  bool operator==(const PointerPayload&) const = default;
};

struct DiffPayload {
  std::string minuend;
  std::int64_t minuend_offset = 0;
  std::string subtrahend;
  std::int64_t subtrahend_offset = 0;
  std::uint8_t width = 8;
  bool operator==(const DiffPayload&) const = default;
};

struct Zeroes {
  std::uint64_t size = 0;
  bool operator==(const Zeroes&) const = default;
};

using Payload = std::variant<RawBytes, PointerPayload, DiffPayload, Zeroes>;

std::uint64_t payload_size(const Payload& p);

struct Variable {
  Address address = 0;
  std::uint64_t size = 0;
  std::string label;  // empty only when no label exists at `address`
  std::vector<Payload> payload;

  bool operator==(const Variable&) const = default;
};

struct CfgBlock {
  Address start = 0;
  Address end = 0;  // one past the last instruction byte
  std::vector<Address> successors;
  bool exit = false;

  bool operator==(const CfgBlock&) const = default;
};

struct Cfg {
  Address function_entry = 0;
  std::vector<CfgBlock> blocks;

  const CfgBlock* block(Address start) const;
  bool operator==(const Cfg&) const = default;
};

/// A data cell the metadata marks as holding a pointer or difference.
struct Earmark {
  std::uint8_t width = 8;
  Payload payload;

  bool operator==(const Earmark&) const = default;
};

struct LiftedProgram {
  LiftMode mode = LiftMode::Strict;
  EllfMetadata meta;
  MemoryImage image;
  std::vector<SectionInfo> sections;  // alloc sections in address order

  std::map<Address, isa::Instruction> raw;           // step I output
  std::map<Address, isa::Instruction> instructions;  // symbolized copy
  LabelMap labels;
  std::map<Address, Earmark> earmarks;
  std::vector<Variable> variables;
  std::vector<Cfg> cfgs;
  std::vector<Diagnostic> diagnostics;

  const SectionInfo* section_containing(Address a) const;
  bool operator==(const LiftedProgram&) const = default;
};

// Individual pipeline steps, exposed so callers can run them in any order.

/// Decodes every region. Throws RegionDecodeError / RegionOverlap.
std::map<Address, isa::Instruction> lift_unsymbolized(const MemoryImage& image,
                                                      const std::vector<InstructionRegion>& regions);

/// `extra_blocks` adds block labels beyond the BasicBlock records (branch and
/// jump-table targets found in the decoded code).
LabelMap generate_labels(const EllfMetadata& meta, const std::vector<SectionInfo>& sections,
                         const std::set<Address>& extra_blocks = {});

/// Decode, label generation and pointer symbolization.
LiftedProgram lift_prepare(const ElfImage& image, const EllfMetadata& meta, LiftMode mode);

void coarse_symbolize(LiftedProgram& lp);
void text_symbolize(LiftedProgram& lp);
void stack_symbolize(LiftedProgram& lp);
void data_symbolize(LiftedProgram& lp);
void build_cfgs(LiftedProgram& lp);

enum class SymbolizeStep { Text, Stack, Data };

inline constexpr std::array<SymbolizeStep, 3> kDefaultStepOrder{SymbolizeStep::Text, SymbolizeStep::Stack,
                                                               SymbolizeStep::Data};

LiftedProgram lift(const ElfImage& image, const EllfMetadata& meta, LiftMode mode,
                   std::array<SymbolizeStep, 3> order = kDefaultStepOrder);

std::string emit_assembly(const LiftedProgram& lp);

}  // namespace ellf
