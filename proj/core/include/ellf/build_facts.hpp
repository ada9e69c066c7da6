#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ellf/elf.hpp"
#include "ellf/metadata.hpp"

namespace ellf {

struct FactsFunction {
  Address function_addr = 0;
  std::vector<std::uint64_t> block_offsets;
  std::vector<std::uint64_t> block_sizes;
};

enum class RelocKind { Abs64, Pc32, Diff32 };

struct FactsRelocation {
  Address addr = 0;  // location of the relocated field
  RelocKind kind = RelocKind::Abs64;
  Address target_addr = 0;
  std::optional<Address> subtrahend_addr;
};

struct FactsVariable {
  Address addr = 0;
  std::uint64_t size = 0;
};

struct FactsLocals {
  Address function_addr = 0;
  std::vector<std::uint64_t> offsets;
};

struct FactsJumpTable {
  Address table_addr = 0;
  std::uint64_t entry_count = 0;
  std::uint64_t entry_size = 4;
};

/// What a toolchain knows about the final link: block layout, relocations,
/// variables, stack objects and jump tables. All addresses are final.
struct BuildFacts {
  std::vector<FactsFunction> basic_blocks;
  std::vector<FactsRelocation> relocations;
  std::vector<FactsVariable> variables;
  std::vector<FactsLocals> locals;
  std::vector<FactsJumpTable> jump_tables;
};

/// Throws Error(BadJson) on malformed input.
BuildFacts build_facts_from_json(const std::string& text);

struct FactsResult {
  EllfMetadata meta;
  std::vector<Diagnostic> diagnostics;

  bool has_errors() const;
};

/// Converts build facts into metadata. `image` supplies the code bytes that
/// instruction counts and function ends are decoded from.
FactsResult from_build_facts(const BuildFacts& facts, const MemoryImage& image);

}  // namespace ellf
