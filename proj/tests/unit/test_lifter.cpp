#include <gtest/gtest.h>

#include "ellf/asm.hpp"
#include "ellf/lifter.hpp"
#include "test_support.hpp"

using namespace ellf;

namespace {

struct Lifted {
  ElfImage elf;
  EllfMetadata meta;
};

Lifted assemble_source(const std::string& src) {
  auto out = assemble_text(src);
  return {read_elf(out.elf), out.meta};
}

Lifted dispatch() {
  auto l = assemble_source(test::read_text(test::data_dir() / "fixtures/dispatch.s"));
  l.meta = test::dispatch_meta();  // hand-written metadata, not the assembler output
  return l;
}

std::vector<Address> successors(const LiftedProgram& lp, Address block) {
  for (const auto& c : lp.cfgs) {
    if (const auto* b = c.block(block)) return b->successors;
  }
  ADD_FAILURE() << "no block " << hex(block);
  return {};
}

bool has_line(const std::string& text, const std::string& line) {
  return text.find("\n" + line + "\n") != std::string::npos || text.rfind(line + "\n", 0) == 0;
}

constexpr const char* kFrame = R"(
.section .text
.func f
.slot f, a, 4
.slot f, b, 32
.slot f, c, 40
  push rbp
  mov rbp, rsp
  mov qword [rbp - 0x8], 1
  mov dword [rbp + 0x4], 2
  mov rax, qword [rbp - 0x20]
  pop rbp
  ret
.endfunc
.func g
  push rbp
  mov rbp, rsp
  mov qword [rbp - 0x8], 1
  pop rbp
  ret
.endfunc
)";

}  // namespace

TEST(LiftUnsymbolized, DispatchRegion) {
  const auto l = dispatch();
  const auto insns = lift_unsymbolized(load_image(l.elf), l.meta.instruction_regions);
  ASSERT_EQ(insns.size(), 10u);
  EXPECT_EQ(isa::format_instruction(insns.begin()->second), "push rbp");
  EXPECT_EQ(insns.rbegin()->second.mnemonic, "ret");
  EXPECT_EQ(insns.rbegin()->first, 0x4023u);
}

TEST(LiftUnsymbolized, SingleRetAndBadSecond) {
  MemoryImage img;
  const std::vector<std::uint8_t> bytes = {0xC3, 0x06};
  img.add(0x1000, bytes);
  const auto one = lift_unsymbolized(img, {{0x1000, 1}});
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one.at(0x1000).mnemonic, "ret");
  try {
    lift_unsymbolized(img, {{0x1000, 2}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::RegionDecodeError);
    EXPECT_NE(e.message().find("0x1001"), std::string::npos);
  }
}

TEST(Labels, DispatchNames) {
  const auto l = dispatch();
  const auto lp = lift_prepare(l.elf, l.meta, LiftMode::Strict);
  const auto& labels = lp.labels;
  ASSERT_NE(labels.at(0x4000), nullptr);
  EXPECT_EQ(labels.at(0x4000)->name, "F_4000");
  EXPECT_EQ(labels.at(0x4014)->name, ".L4000_1");
  EXPECT_EQ(labels.at(0x401C)->name, ".L4000_2");  // table target without a block record
  EXPECT_EQ(labels.at(0x4023)->name, ".L4000_3");  // jump target tagged only FunctionEnd
  EXPECT_EQ(labels.at(0x4024)->name, "D_4024");
  EXPECT_EQ(labels.at(0x402C)->name, "D_402C");
}

TEST(Labels, EmptyTextFallsBackToSectionAnchor) {
  const std::vector<SectionInfo> sections = {{".text", 0x4000, 0x24, {true, true, false}, false}};
  const auto labels = generate_labels(EllfMetadata{}, sections);
  ASSERT_EQ(labels.entries().size(), 1u);
  EXPECT_EQ(labels.lookup(0x4010), std::make_optional(std::make_pair(std::string(".Lsec_text"), std::uint64_t{0x10})));
  EXPECT_EQ(labels.lookup(0x4024)->second, 0x24u);  // one past the end still resolves
  EXPECT_FALSE(labels.lookup(0x5000).has_value());
}

TEST(Labels, BlockNumberingRestartsPerFunction) {
  EllfMetadata m;
  m.text = {{0x1000, TextKind::FunctionStart},
            {0x1004, TextKind::BasicBlock},
            {0x1008, TextKind::BasicBlock},
            {0x1010, TextKind::FunctionStart},
            {0x1014, TextKind::BasicBlock}};
  const std::vector<SectionInfo> sections = {{".text", 0x1000, 0x20, {true, true, false}, false}};
  const auto labels = generate_labels(m, sections);
  EXPECT_EQ(labels.at(0x1008)->name, ".L1000_2");
  EXPECT_EQ(labels.at(0x1014)->name, ".L1010_1");
  EXPECT_EQ(labels.at(0x1010)->kind, LabelKind::Function);
}

TEST(Coarse, DispatchPointers) {
  const auto l = dispatch();
  const auto lp = lift_prepare(l.elf, l.meta, LiftMode::Strict);
  EXPECT_EQ(isa::format_instruction(lp.instructions.at(0x4004)), "lea rcx, [D_4024]");
  EXPECT_EQ(isa::format_instruction(lp.instructions.at(0x401C)), "mov rax, 42");
  ASSERT_EQ(lp.earmarks.count(0x4024), 1u);
  EXPECT_EQ(lp.earmarks.at(0x4024).payload, Payload(DiffPayload{".L4000_1", 0, "D_4024", 0, 8}));
}

TEST(Coarse, MismatchedPointerIsAnError) {
  auto l = dispatch();
  std::get<OperandPointer>(l.meta.pointers[0]).target = 0x402C;
  try {
    lift(l.elf, l.meta, LiftMode::Strict);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::PointerMismatch);
  }
  const auto lp = lift(l.elf, l.meta, LiftMode::Lenient);
  ASSERT_FALSE(lp.diagnostics.empty());
  EXPECT_EQ(lp.diagnostics[0].error, ErrorKind::PointerMismatch);
}

TEST(Coarse, OperandIndexOutOfRange) {
  auto l = dispatch();
  std::get<OperandPointer>(l.meta.pointers[0]).operand_index = 2;
  try {
    lift(l.elf, l.meta, LiftMode::Strict);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::OperandIndexOutOfRange);
  }
}

TEST(TextStep, AnnotationsAndBranches) {
  const auto l = dispatch();
  const auto lp = lift(l.elf, l.meta, LiftMode::Strict);
  EXPECT_EQ(lp.instructions.at(0x4000).annotations, std::vector<std::string>{".func F_4000"});
  EXPECT_EQ(isa::format_instruction(lp.instructions.at(0x4017)), "jmp .L4000_3");
  EXPECT_EQ(lp.instructions.at(0x4023).closing, std::vector<std::string>{".endfunc"});
}

TEST(TextStep, DanglingRecord) {
  auto l = dispatch();
  l.meta.text.insert(l.meta.text.begin() + 1, TextRecord{0x4002, TextKind::BasicBlock});
  EXPECT_THROW(lift(l.elf, l.meta, LiftMode::Strict), Error);
  const auto lp = lift(l.elf, l.meta, LiftMode::Lenient);
  const bool dangling = std::any_of(lp.diagnostics.begin(), lp.diagnostics.end(), [](const Diagnostic& d) {
    return d.kind == DiagKind::LiftError && d.error == ErrorKind::DanglingTextRecord;
  });
  EXPECT_TRUE(dangling);
}

TEST(StackStep, SlotsAndInteriorOffsets) {
  const auto l = assemble_source(kFrame);
  const auto lp = lift(l.elf, l.meta, LiftMode::Strict);
  const auto& insns = lp.instructions;
  auto text_at = [&](std::size_t i) { return isa::format_instruction(std::next(insns.begin(), static_cast<long>(i))->second); };
  EXPECT_EQ(text_at(2), "mov qword [rbp + s32 + 0x10], 1");  // rsp0 - 16: slot 32, interior 16
  EXPECT_EQ(text_at(3), "mov dword [rbp + s4], 2");          // rsp0 - 4: slot 4
  EXPECT_EQ(text_at(4), "mov rax, [rbp + s40]");
  EXPECT_EQ(text_at(9), "mov qword [rbp - 0x8], 1");  // g has no stack record
}

TEST(DataStep, DispatchVariables) {
  const auto l = dispatch();
  const auto lp = lift(l.elf, l.meta, LiftMode::Strict);
  ASSERT_EQ(lp.variables.size(), 2u);
  EXPECT_EQ(lp.variables[0].label, "D_4024");
  EXPECT_EQ(lp.variables[0].payload, (std::vector<Payload>{DiffPayload{".L4000_1", 0, "D_4024", 0, 8}}));
  EXPECT_EQ(lp.variables[1].label, "D_402C");
  EXPECT_EQ(lp.variables[1].payload, (std::vector<Payload>{DiffPayload{".L4000_2", 0, "D_4024", 0, 8}}));
}

TEST(DataStep, SectionWithoutRecordsIsOneVariable) {
  auto l = dispatch();
  l.meta.data.clear();
  const auto lp = lift(l.elf, l.meta, LiftMode::Strict);
  ASSERT_EQ(lp.variables.size(), 1u);
  EXPECT_EQ(lp.variables[0].address, 0x4024u);
  EXPECT_EQ(lp.variables[0].size, 16u);
  EXPECT_EQ(lp.variables[0].payload.size(), 2u);
}

TEST(DataStep, PointerCrossingRecordBoundary) {
  auto l = dispatch();
  l.meta.data = {{0x4024, 4}, {0x4028, 12}};
  try {
    lift(l.elf, l.meta, LiftMode::Strict);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::PointerStraddle);
  }
}

TEST(Cfg, DispatchIndirectSuccessorsAreTableTargets) {
  const auto l = dispatch();
  const auto lp = lift(l.elf, l.meta, LiftMode::Strict);
  ASSERT_EQ(lp.cfgs.size(), 1u);
  EXPECT_EQ(successors(lp, 0x4000), (std::vector<Address>{0x4014, 0x401C}));
  EXPECT_EQ(successors(lp, 0x4014), std::vector<Address>{0x4023});
  EXPECT_EQ(successors(lp, 0x401C), std::vector<Address>{0x4023});
  EXPECT_TRUE(lp.cfgs[0].block(0x4023)->exit);
}

TEST(Cfg, StraightLineIsOneExitBlock) {
  const auto l = assemble_source(".section .text\n.func f\n  push rbp\n  pop rbp\n  ret\n.endfunc\n");
  const auto lp = lift(l.elf, l.meta, LiftMode::Strict);
  ASSERT_EQ(lp.cfgs.size(), 1u);
  ASSERT_EQ(lp.cfgs[0].blocks.size(), 1u);
  EXPECT_TRUE(lp.cfgs[0].blocks[0].exit);
  EXPECT_TRUE(lp.cfgs[0].blocks[0].successors.empty());
}

TEST(Cfg, ConditionalHasTwoSuccessors) {
  const auto l = assemble_source(R"(
.section .text
.func f
  test rdi, rdi
  je zero
  mov rax, 1
  ret
zero:
  xor rax, rax
  ret
.endfunc
)");
  const auto lp = lift(l.elf, l.meta, LiftMode::Strict);
  const auto succ = successors(lp, lp.cfgs[0].function_entry);
  EXPECT_EQ(succ.size(), 2u);
}

TEST(Cfg, JumpIntoAnotherFunctionBodyIsRejected) {
  const auto l = assemble_source(R"(
.section .text
.func f
  jmp inside
.endfunc
.func g
  nop
inside:
  ret
.endfunc
)");
  auto meta = l.meta;
  std::erase_if(meta.text, [](const TextRecord& t) { return t.kind == TextKind::BasicBlock; });
  // The decoded jump still implies a label at `inside`, so this is fine.
  EXPECT_NO_THROW(lift(l.elf, meta, LiftMode::Strict));
}

TEST(Emit, DispatchShape) {
  const auto l = dispatch();
  const auto text = emit_assembly(lift(l.elf, l.meta, LiftMode::Strict));
  const auto lea = text.find("lea rcx, [D_4024]");
  const auto jmp = text.find("  jmp rdx\n");
  ASSERT_NE(lea, std::string::npos);
  ASSERT_NE(jmp, std::string::npos);
  EXPECT_LT(lea, jmp);
  EXPECT_NE(text.find(".L4000_1:", jmp), std::string::npos);
  EXPECT_TRUE(has_line(text, "  .quad .L4000_2 - D_4024"));
}

TEST(Emit, EmptyProgramHasOnlySectionHeaders) {
  ElfSectionSpec s;
  s.name = ".text";
  s.vaddr = 0x1000;
  s.flags = {true, true, false};
  const auto elf = read_elf(write_elf(0x1000, {s}));
  EXPECT_EQ(emit_assembly(lift(elf, EllfMetadata{}, LiftMode::Strict)), ".section .text base=0x1000\n");
}

TEST(Emit, ReparsesToSameText) {
  for (const auto& path : test::corpus_files()) {
    const auto out = assemble_text(test::read_text(path));
    const auto text = emit_assembly(lift(read_elf(out.elf), out.meta, LiftMode::Strict));
    const auto again = assemble_text(text);
    EXPECT_EQ(emit_assembly(lift(read_elf(again.elf), again.meta, LiftMode::Strict)), text) << path;
  }
}

TEST(Lift, RegionsOnlyIsCoarse) {
  auto l = dispatch();
  EllfMetadata regions_only;
  regions_only.instruction_regions = l.meta.instruction_regions;
  const auto lp = lift(l.elf, regions_only, LiftMode::Lenient);
  const auto text = emit_assembly(lp);
  EXPECT_NE(text.find(".Lsec_text:"), std::string::npos);
  EXPECT_NE(text.find(".Lsec_data:"), std::string::npos);
  EXPECT_NE(text.find("jmp .L_4023"), std::string::npos);  // decoded target still gets a label
  EXPECT_NE(text.find("lea rcx, [rip + 0x19]"), std::string::npos);  // no pointer record: raw
}

TEST(Lift, StepOrderDoesNotMatter) {
  const auto l = dispatch();
  const auto reference = emit_assembly(lift(l.elf, l.meta, LiftMode::Strict));
  std::array<SymbolizeStep, 3> order = {SymbolizeStep::Data, SymbolizeStep::Stack, SymbolizeStep::Text};
  std::sort(order.begin(), order.end());
  do {
    EXPECT_EQ(emit_assembly(lift(l.elf, l.meta, LiftMode::Strict, order)), reference);
  } while (std::next_permutation(order.begin(), order.end()));
}
