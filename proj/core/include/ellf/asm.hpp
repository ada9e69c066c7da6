#pragma once

#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "ellf/elf.hpp"
#include "ellf/isa.hpp"
#include "ellf/metadata.hpp"

namespace ellf {

struct LabelDef {
  std::string name;
};

/// `.func NAME`: defines NAME and starts a function.
struct FuncBegin {
  std::string name;
};

/// `.endfunc` closes the function; `.fend` marks an extra exit. Both put a
/// FunctionEnd on the instruction just before them.
struct FuncEnd {
  bool closes = true;
};

struct Instr {
  std::string mnemonic;
  std::vector<isa::Operand> operands;
};

struct DataBytes {
  std::vector<std::uint8_t> bytes;
};

/// One `.long` / `.quad` cell: a number, LABEL+off, or A+off - (B+off).
struct DataValue {
  std::uint8_t width = 8;
  std::int64_t number = 0;
  std::string label;
  std::int64_t offset = 0;
  std::string subtrahend;
  std::int64_t subtrahend_offset = 0;

  bool is_pointer() const { return !label.empty() && subtrahend.empty(); }
  bool is_diff() const { return !subtrahend.empty(); }
};

struct DataZero {
  std::uint64_t size = 0;
};

struct SizeDef {
  std::string label;
  std::uint64_t size = 0;
};

/// `.set NAME, LABEL+OFF`: NAME is a data object placed inside another one.
struct SetDef {
  std::string name;
  std::string label;
  std::int64_t offset = 0;
};

/// `.slot FUNC, NAME, OFFSET`: stack object at OFFSET below the entry stack
/// pointer. Inside rbp operands NAME stands for the rbp-relative value 8 - OFFSET.
struct SlotDef {
  std::string function;
  std::string name;
  std::uint64_t offset = 0;
};

using AsmNode = std::variant<LabelDef, FuncBegin, FuncEnd, Instr, DataBytes, DataValue, DataZero, SizeDef, SetDef, SlotDef>;

struct AsmItem {
  int line = 0;
  AsmNode node;
};

struct AsmSection {
  std::string name;
  std::optional<Address> base;
  std::vector<AsmItem> items;
};

struct AsmProgram {
  std::vector<AsmSection> sections;
};

/// Throws SyntaxError, DuplicateLabel or UnknownDirective; messages start with "line N:".
AsmProgram parse_assembly(const std::string& text);

struct AsmOptions {
  Address base_text = 0x401000;  // for code sections without base=
  // For other sections without base=; unset means the page after the code.
  std::optional<Address> base_data;
};

struct AsmOutput {
  std::vector<std::uint8_t> elf;  // includes the injected .ellf section
  EllfMetadata meta;
  std::map<std::string, Address> symbols;
};

/// Throws UndefinedLabel, RangeOverflow, SectionOverlap (and parse-level kinds).
AsmOutput assemble(const AsmProgram& prog, const AsmOptions& options = {});
AsmOutput assemble_text(const std::string& text, const AsmOptions& options = {});

struct RoundtripReport {
  bool bytes_equal = false;
  bool metadata_equal = false;
  bool text_fixpoint = false;
  std::optional<ErrorKind> error_kind;
  std::string error;
  std::string lifted_text;

  bool passed() const { return bytes_equal && metadata_equal && text_fixpoint && !error_kind; }
};

/// assemble -> lift (strict) -> emit -> reassemble, then compares alloc
/// bytes, metadata and a second emission.
RoundtripReport roundtrip_check(const std::string& source, const AsmOptions& options = {});

}  // namespace ellf
