#include <array>

#include "ellf/metadata.hpp"
#include "ellf/varint.hpp"

namespace ellf {

namespace {

constexpr std::array<std::uint8_t, 4> kMagic = {0x45, 0x4C, 0x4C, 0x46};

enum TableId : std::uint8_t { kInstructions = 1, kPointers = 2, kText = 3, kStack = 4, kData = 5 };

using Bytes = std::vector<std::uint8_t>;

// Signed distance from `from` to `to`, modulo 2^64.
std::int64_t rel(Address to, Address from) { return static_cast<std::int64_t>(to - from); }

void put_instructions(Bytes& out, const EllfMetadata& meta) {
  out.push_back(kInstructions);
  varint::put_u(out, meta.instruction_regions.size());
  Address prev = 0;
  for (const auto& r : meta.instruction_regions) {
    varint::put_u(out, r.start - prev);
    varint::put_u(out, r.count);
    prev = r.start;
  }
}

void put_pointers(Bytes& out, const EllfMetadata& meta) {
  out.push_back(kPointers);
  varint::put_u(out, meta.pointers.size());
  Address prev = 0;
  for (const auto& p : meta.pointers) {
    const Address key = pointer_key(p);
    varint::put_u(out, key - prev);
    out.push_back(pointer_kind(p));
    if (const auto* op = std::get_if<OperandPointer>(&p)) {
      varint::put_u(out, op->operand_index);
      varint::put_s(out, rel(op->target, key));
    } else if (const auto* dp = std::get_if<DataPointer>(&p)) {
      varint::put_s(out, rel(dp->target, key));
    } else {
      const auto& diff = std::get<DataDiff>(p);
      varint::put_s(out, rel(diff.minuend, key));
      varint::put_s(out, rel(diff.subtrahend, key));
    }
    prev = key;
  }
}

void put_text(Bytes& out, const EllfMetadata& meta) {
  out.push_back(kText);
  varint::put_u(out, meta.text.size());
  Address prev = 0;
  for (const auto& t : meta.text) {
    varint::put_u(out, t.addr - prev);
    out.push_back(static_cast<std::uint8_t>(t.kind));
    prev = t.addr;
  }
}

void put_stack(Bytes& out, const EllfMetadata& meta) {
  out.push_back(kStack);
  varint::put_u(out, meta.stack.size());
  Address prev = 0;
  for (const auto& s : meta.stack) {
    varint::put_u(out, s.function_entry - prev);
    varint::put_u(out, s.offsets.size());
    std::uint64_t prev_offset = 0;
    for (const auto off : s.offsets) {
      varint::put_u(out, off - prev_offset);
      prev_offset = off;
    }
    prev = s.function_entry;
  }
}

void put_data(Bytes& out, const EllfMetadata& meta) {
  out.push_back(kData);
  varint::put_u(out, meta.data.size());
  Address prev = 0;
  for (const auto& d : meta.data) {
    varint::put_u(out, d.addr - prev);
    varint::put_u(out, d.size);
    prev = d.addr;
  }
}

void expect_table(varint::Reader& in, TableId id) {
  const std::uint8_t got = in.byte();
  if (got != id) {
    fail(ErrorKind::NonCanonical, "expected table id " + std::to_string(id) + ", found " + std::to_string(got));
  }
}

}  // namespace

std::vector<std::uint8_t> encode_metadata(const EllfMetadata& meta) {
  check_invariants(meta);
  Bytes out(kMagic.begin(), kMagic.end());
  out.push_back(meta.version);
  put_instructions(out, meta);
  put_pointers(out, meta);
  put_text(out, meta);
  put_stack(out, meta);
  put_data(out, meta);
  return out;
}

EllfMetadata decode_metadata(std::span<const std::uint8_t> bytes) {
  for (std::size_t i = 0; i < kMagic.size(); ++i) {
    if (i >= bytes.size()) fail(ErrorKind::TruncatedTable, "input ends inside the magic");
    if (bytes[i] != kMagic[i]) fail(ErrorKind::BadMagic, "section does not start with \"ELLF\"");
  }
  varint::Reader in(bytes.subspan(kMagic.size()));
  EllfMetadata meta;
  meta.version = in.byte();
  if (meta.version != kMetadataVersion) {
    fail(ErrorKind::UnsupportedVersion, "version " + std::to_string(meta.version));
  }

  expect_table(in, kInstructions);
  Address prev = 0;
  for (std::uint64_t n = in.u(); n > 0; --n) {
    InstructionRegion r;
    r.start = prev + in.u();
    r.count = in.u();
    meta.instruction_regions.push_back(r);
    prev = r.start;
  }

  expect_table(in, kPointers);
  prev = 0;
  for (std::uint64_t n = in.u(); n > 0; --n) {
    const Address key = prev + in.u();
    const std::uint8_t kind = in.byte();
    switch (kind) {
      case 0: {
        OperandPointer op{key, 0, 0};
        const std::uint64_t index = in.u();
        if (index > UINT32_MAX) fail(ErrorKind::NonCanonical, "operand index out of range at " + hex(key));
        op.operand_index = static_cast<std::uint32_t>(index);
        op.target = key + static_cast<Address>(in.s());
        meta.pointers.emplace_back(op);
        break;
      }
      case 1:
        meta.pointers.emplace_back(DataPointer{key, key + static_cast<Address>(in.s())});
        break;
      case 2:
      case 3: {
        DataDiff d{key, 0, 0, static_cast<std::uint8_t>(kind == 2 ? 8 : 4)};
        d.minuend = key + static_cast<Address>(in.s());
        d.subtrahend = key + static_cast<Address>(in.s());
        meta.pointers.emplace_back(d);
        break;
      }
      default:
        fail(ErrorKind::NonCanonical, "unknown pointer kind " + std::to_string(kind));
    }
    prev = key;
  }

  expect_table(in, kText);
  prev = 0;
  for (std::uint64_t n = in.u(); n > 0; --n) {
    TextRecord t;
    t.addr = prev + in.u();
    const std::uint8_t kind = in.byte();
    if (kind > 2) fail(ErrorKind::NonCanonical, "unknown text kind " + std::to_string(kind));
    t.kind = static_cast<TextKind>(kind);
    meta.text.push_back(t);
    prev = t.addr;
  }

  expect_table(in, kStack);
  prev = 0;
  for (std::uint64_t n = in.u(); n > 0; --n) {
    StackRecord s;
    s.function_entry = prev + in.u();
    std::uint64_t offset = 0;
    for (std::uint64_t k = in.u(); k > 0; --k) {
      const std::uint64_t delta = in.u();
      if (offset + delta < offset) fail(ErrorKind::NonCanonical, "stack offset overflow at " + hex(s.function_entry));
      offset += delta;
      s.offsets.push_back(offset);
    }
    meta.stack.push_back(std::move(s));
    prev = meta.stack.back().function_entry;
  }

  expect_table(in, kData);
  prev = 0;
  for (std::uint64_t n = in.u(); n > 0; --n) {
    DataRecord d;
    d.addr = prev + in.u();
    d.size = in.u();
    meta.data.push_back(d);
    prev = d.addr;
  }

  if (!in.at_end()) fail(ErrorKind::NonCanonical, "trailing bytes after the data table");

  try {
    check_invariants(meta);
  } catch (const Error& e) {
    fail(ErrorKind::NonCanonical, e.message());
  }
  return meta;
}

std::vector<TableStats> table_stats(const EllfMetadata& meta) {
  std::vector<TableStats> stats;
  const auto measure = [&](std::uint8_t id, const char* name, std::size_t records, auto writer) {
    Bytes out;
    writer(out, meta);
    stats.push_back({id, name, records, out.size()});
  };
  measure(kInstructions, "instructions", meta.instruction_regions.size(), put_instructions);
  measure(kPointers, "pointers", meta.pointers.size(), put_pointers);
  measure(kText, "text", meta.text.size(), put_text);
  measure(kStack, "stack", meta.stack.size(), put_stack);
  measure(kData, "data", meta.data.size(), put_data);
  return stats;
}

}  // namespace ellf
