#include <gtest/gtest.h>

#include <cstring>

#include "ellf/asm.hpp"
#include "ellf/build_facts.hpp"
#include "ellf/validate.hpp"
#include "test_support.hpp"

using namespace ellf;

namespace {

// Block 1: four `add rax, rcx` and two `add rax, 1` (20 bytes).
// Block 2: `inc rax; ret` (4 bytes).
MemoryImage two_block_code(Address base) {
  std::vector<std::uint8_t> code;
  for (int i = 0; i < 4; ++i) code.insert(code.end(), {0x48, 0x01, 0xC8});
  for (int i = 0; i < 2; ++i) code.insert(code.end(), {0x48, 0x83, 0xC0, 0x01});
  code.insert(code.end(), {0x48, 0xFF, 0xC0, 0xC3});
  MemoryImage img;
  img.add(base, code);
  return img;
}

std::size_t count(const std::vector<Diagnostic>& ds, DiagKind k) {
  return static_cast<std::size_t>(std::count_if(ds.begin(), ds.end(), [&](const Diagnostic& d) { return d.kind == k; }));
}

ElfImage dispatch_elf() { return read_elf(assemble_text(test::read_text(test::data_dir() / "fixtures/dispatch.s")).elf); }

}  // namespace

TEST(BuildFacts, AdjacentBlocksCollapseIntoOneRegion) {
  BuildFacts facts;
  facts.basic_blocks = {{0x1000, {0, 20}, {20, 4}}};
  const auto r = from_build_facts(facts, two_block_code(0x1000));
  EXPECT_FALSE(r.has_errors());
  ASSERT_EQ(r.meta.instruction_regions.size(), 1u);
  EXPECT_EQ(r.meta.instruction_regions[0], (InstructionRegion{0x1000, 8}));
  EXPECT_EQ(r.meta.text, (std::vector<TextRecord>{{0x1000, TextKind::FunctionStart},
                                                  {0x1014, TextKind::BasicBlock},
                                                  {0x1017, TextKind::FunctionEnd}}));
}

TEST(BuildFacts, OverlappingVariableIsDropped) {
  const char hello[] = "Hello World";
  MemoryImage img;
  img.add(0x5000, std::span(reinterpret_cast<const std::uint8_t*>(hello), sizeof hello));
  BuildFacts facts;
  facts.variables = {{0x5000, 12}, {0x5006, 6}};
  const auto r = from_build_facts(facts, img);
  EXPECT_EQ(r.meta.data, (std::vector<DataRecord>{{0x5000, 12}}));
  ASSERT_EQ(r.diagnostics.size(), 1u);
  EXPECT_EQ(r.diagnostics[0].kind, DiagKind::OverlapDropped);
  EXPECT_EQ(r.diagnostics[0].addr, 0x5006u);
  EXPECT_FALSE(r.has_errors());
}

TEST(BuildFacts, EmptyFactsGiveEmptyMetadata) {
  const auto r = from_build_facts(BuildFacts{}, MemoryImage{});
  EXPECT_TRUE(r.meta.empty());
  EXPECT_TRUE(r.diagnostics.empty());
}

TEST(BuildFacts, DispatchFactsReproduceOracle) {
  const auto elf = dispatch_elf();
  const auto facts = build_facts_from_json(R"({
    "basic_blocks": [{"function_addr": 16384, "block_offsets": [0, 20], "block_sizes": [20, 16]}],
    "relocations": [
      {"addr": 16391, "kind": "pc32", "target_addr": 16420},
      {"addr": 16420, "kind": "diff32", "target_addr": 16404, "subtrahend_addr": 16420},
      {"addr": 16428, "kind": "diff32", "target_addr": 16412, "subtrahend_addr": 16420}],
    "variables": [{"addr": 16420, "size": 8}, {"addr": 16428, "size": 8}],
    "jump_tables": [{"table_addr": 16420, "entry_count": 2, "entry_size": 8}]
  })");
  const auto r = from_build_facts(facts, load_image(elf));
  EXPECT_FALSE(r.has_errors());
  auto expected = test::dispatch_meta();
  EXPECT_EQ(r.meta.instruction_regions, expected.instruction_regions);
  EXPECT_EQ(r.meta.pointers, expected.pointers);
  EXPECT_EQ(r.meta.data, expected.data);
  EXPECT_TRUE(validate_metadata(r.meta, elf).empty());
}

TEST(BuildFacts, RelocationOffOperandIsInconsistent) {
  BuildFacts facts;
  facts.basic_blocks = {{0x1000, {0, 20}, {20, 4}}};
  facts.relocations = {{0x1001, RelocKind::Pc32, 0x1000, std::nullopt}};
  const auto r = from_build_facts(facts, two_block_code(0x1000));
  EXPECT_TRUE(r.has_errors());
  EXPECT_EQ(count(r.diagnostics, DiagKind::InconsistentFacts), 1u);
}

TEST(BuildFacts, LocalsBecomeStackRecords) {
  BuildFacts facts;
  facts.basic_blocks = {{0x1000, {0}, {24}}};
  facts.locals = {{0x1000, {40, 4, 32}}};
  const auto r = from_build_facts(facts, two_block_code(0x1000));
  ASSERT_EQ(r.meta.stack.size(), 1u);
  EXPECT_EQ(r.meta.stack[0].offsets, (std::vector<std::uint64_t>{4, 32, 40}));
}

TEST(BuildFacts, JsonErrors) {
  for (const char* text : {"nope", R"({"relocations": [{"addr": 1, "kind": "abs32", "target_addr": 2}]})",
                           R"({"variables": [{"addr": -1, "size": 2}]})"}) {
    try {
      build_facts_from_json(text);
      ADD_FAILURE() << text;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::BadJson) << text;
    }
  }
}

TEST(Validate, DispatchIsClean) { EXPECT_TRUE(validate_metadata(test::dispatch_meta(), dispatch_elf()).empty()); }

TEST(Validate, DataRecordPastSectionEnd) {
  auto m = test::dispatch_meta();
  m.data.back().size = 9;
  const auto ds = validate_metadata(m, dispatch_elf());
  ASSERT_EQ(ds.size(), 1u);
  EXPECT_EQ(ds[0].kind, DiagKind::RangeDiagnostic);
}

TEST(Validate, ShiftedOperandPointerIsMisaligned) {
  auto m = test::dispatch_meta();
  std::get<OperandPointer>(m.pointers[0]).instr_addr += 1;
  const auto ds = validate_metadata(m, dispatch_elf());
  ASSERT_EQ(ds.size(), 1u);
  EXPECT_EQ(ds[0].kind, DiagKind::AlignmentDiagnostic);
  EXPECT_EQ(ds[0].addr, 0x4005u);
}

TEST(Validate, TargetOutsideEverySection) {
  auto m = test::dispatch_meta();
  std::get<OperandPointer>(m.pointers[0]).target = 0x900000;
  const auto ds = validate_metadata(m, dispatch_elf());
  EXPECT_EQ(count(ds, DiagKind::RangeDiagnostic), 1u);
}

TEST(Validate, StackRecordForNonFunction) {
  auto m = test::dispatch_meta();
  m.stack = {{0x4014, {8}}};
  EXPECT_EQ(count(validate_metadata(m, dispatch_elf()), DiagKind::StackDiagnostic), 1u);
}

TEST(Validate, RegionIntoDataIsReported) {
  auto m = test::dispatch_meta();
  m.instruction_regions[0].count = 12;
  EXPECT_GE(count(validate_metadata(m, dispatch_elf()), DiagKind::RegionDiagnostic), 1u);
}

TEST(DecodeRegions, OverlapAndBadBytes) {
  const auto img = two_block_code(0x1000);
  EXPECT_EQ(decode_regions({{0x1000, 8}}, img).size(), 8u);
  try {
    decode_regions({{0x1000, 2}, {0x1003, 1}}, img);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::RegionOverlap);
  }
  MemoryImage bad;
  const std::vector<std::uint8_t> bytes = {0xC3, 0x06};
  bad.add(0x2000, bytes);
  try {
    decode_regions({{0x2000, 2}}, bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::RegionDecodeError);
    EXPECT_NE(e.message().find("0x2001"), std::string::npos);
  }
}
