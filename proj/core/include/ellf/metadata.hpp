#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "ellf/error.hpp"

namespace ellf {

inline constexpr std::uint8_t kMetadataVersion = 1;
inline constexpr char kEllfSectionName[] = ".ellf";

/// A run of `count` back-to-back instructions starting at `start`.
struct InstructionRegion {
  Address start = 0;
  std::uint64_t count = 1;

  bool operator==(const InstructionRegion&) const = default;
};

/// Operand `operand_index` of the instruction at `instr_addr` holds a pointer to `target`.
struct OperandPointer {
  Address instr_addr = 0;
  std::uint32_t operand_index = 0;
  Address target = 0;

  bool operator==(const OperandPointer&) const = default;
};

/// An 8-byte absolute pointer stored at `addr`.
struct DataPointer {
  Address addr = 0;
  Address target = 0;

  bool operator==(const DataPointer&) const = default;
};

/// A stored difference `minuend - subtrahend` of `width` bytes (4 or 8) at `addr`.
/// Jump tables are the common producer.
struct DataDiff {
  Address addr = 0;
  Address minuend = 0;
  Address subtrahend = 0;
  std::uint8_t width = 8;

  bool operator==(const DataDiff&) const = default;
};

using PointerRecord = std::variant<OperandPointer, DataPointer, DataDiff>;

Address pointer_key(const PointerRecord& record);

// Wire kind byte; also the secondary sort key among records sharing an address.
std::uint8_t pointer_kind(const PointerRecord& record);

enum class TextKind : std::uint8_t { BasicBlock = 0, FunctionStart = 1, FunctionEnd = 2 };

std::string_view to_string(TextKind kind);

struct TextRecord {
  Address addr = 0;
  TextKind kind = TextKind::BasicBlock;

  bool operator==(const TextRecord&) const = default;
};

/// Start offsets of the function's stack objects, counted in bytes below the
/// stack pointer value at the function's first instruction.
struct StackRecord {
  Address function_entry = 0;
  std::vector<std::uint64_t> offsets;

  bool operator==(const StackRecord&) const = default;
};

struct DataRecord {
  Address addr = 0;
  std::uint64_t size = 1;

  bool operator==(const DataRecord&) const = default;
};

struct EllfMetadata {
  std::uint8_t version = kMetadataVersion;
  std::vector<InstructionRegion> instruction_regions;
  std::vector<PointerRecord> pointers;
  std::vector<TextRecord> text;
  std::vector<StackRecord> stack;
  std::vector<DataRecord> data;

  bool operator==(const EllfMetadata&) const = default;

  bool empty() const {
    return instruction_regions.empty() && pointers.empty() && text.empty() && stack.empty() && data.empty();
  }
};

/// Throws Error(InvariantViolation) naming the first broken table invariant.
void check_invariants(const EllfMetadata& meta);

/// Sorts every table into canonical order. Does not remove duplicates or
/// resolve overlaps; run check_invariants afterwards.
void canonicalize(EllfMetadata& meta);

std::vector<std::uint8_t> encode_metadata(const EllfMetadata& meta);
EllfMetadata decode_metadata(std::span<const std::uint8_t> bytes);

struct TableStats {
  std::uint8_t id = 0;
  std::string name;
  std::size_t records = 0;
  std::size_t encoded_bytes = 0;  // including the id byte and the count varint
};

/// Per-table breakdown of encode_metadata's output; the sizes sum to the
/// encoded size minus the 5-byte preamble.
std::vector<TableStats> table_stats(const EllfMetadata& meta);

std::string metadata_to_json(const EllfMetadata& meta, int indent = 2);
EllfMetadata metadata_from_json(const std::string& text);

}  // namespace ellf
