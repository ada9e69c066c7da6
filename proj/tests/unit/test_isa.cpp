#include <gtest/gtest.h>

#include <map>

#include "ellf/isa.hpp"
#include "random_insn.hpp"

using namespace ellf;
using namespace ellf::isa;

namespace {

Instruction dec(std::vector<std::uint8_t> bytes, Address at = 0x4000) { return decode_one(bytes, at); }

ErrorKind decode_error(std::vector<std::uint8_t> bytes) {
  try {
    decode_one(bytes, 0x4000);
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "decoded";
  return ErrorKind::InvariantViolation;
}

Register r64(std::uint8_t n) { return Register{Reg{n, 64}}; }

}  // namespace

TEST(Decode, PushRbp) {
  const auto i = dec({0x55});
  EXPECT_EQ(i.mnemonic, "push");
  EXPECT_EQ(i.length, 1);
  EXPECT_EQ(format_instruction(i), "push rbp");
}

TEST(Decode, XorRaxRax) {
  const auto i = dec({0x48, 0x31, 0xC0});
  EXPECT_EQ(i.length, 3);
  EXPECT_EQ(format_instruction(i), "xor rax, rax");
}

TEST(Decode, MovsxdScaledIndex) {
  const auto i = dec({0x48, 0x63, 0x14, 0xA9});
  EXPECT_EQ(i.length, 4);
  EXPECT_EQ(format_instruction(i), "movsxd rdx, [rcx + rbp*4]");
}

TEST(Decode, InvalidOpcode) { EXPECT_EQ(decode_error({0x06}), ErrorKind::UnknownOpcode); }

TEST(Decode, Truncated) {
  EXPECT_EQ(decode_error({0x48}), ErrorKind::TruncatedInstruction);
  EXPECT_EQ(decode_error({0xE9, 0x00}), ErrorKind::TruncatedInstruction);
  EXPECT_EQ(decode_error({0x48, 0x8B, 0x05, 0x01}), ErrorKind::TruncatedInstruction);
}

TEST(Decode, NonCanonicalEncodingsRejected) {
  EXPECT_EQ(decode_error({0x40, 0xC3}), ErrorKind::UnknownOpcode);        // empty REX
  EXPECT_EQ(decode_error({0x48, 0x8B, 0xC1}), ErrorKind::UnknownOpcode);  // mov r, r via 8B
  EXPECT_EQ(decode_error({0x48, 0x83, 0x40, 0x00, 0x01}), ErrorKind::UnknownOpcode);  // disp8 of zero
}

TEST(Decode, RipRelativeLea) {
  // lea rcx, [rip + 0x19] at 0x4004 -> target 0x4024
  const auto i = dec({0x48, 0x8D, 0x0D, 0x19, 0x00, 0x00, 0x00}, 0x4004);
  ASSERT_EQ(i.operands.size(), 2u);
  const auto& m = std::get<MemRef>(i.operands[1]);
  EXPECT_TRUE(m.rip_relative);
  EXPECT_EQ(0x4004 + i.length + m.displacement, 0x4024);
  EXPECT_EQ(i.disp_offset, 3);
}

TEST(Decode, ShortBranchesAreDecodeOnly) {
  const auto j = dec({0xEB, 0x05}, 0x1000);
  EXPECT_EQ(j.mnemonic, "jmp");
  EXPECT_EQ(std::get<PcRel>(j.operands[0]).target, 0x1007u);
  const auto jne = dec({0x75, 0xFE}, 0x1000);
  EXPECT_EQ(jne.mnemonic, "jne");
  EXPECT_EQ(std::get<PcRel>(jne.operands[0]).target, 0x1000u);
}

TEST(Decode, FromMemoryImage) {
  MemoryImage img;
  const std::vector<std::uint8_t> code = {0x90, 0xC3};
  img.add(0x5000, code);
  EXPECT_EQ(decode_one(img, 0x5001).mnemonic, "ret");
  EXPECT_THROW(decode_one(img, 0x5002), Error);
}

TEST(Encode, FixedBytes) {
  EXPECT_EQ(encode_one("ret", {}), (std::vector<std::uint8_t>{0xC3}));
  const std::vector<Operand> rbp = {r64(5)};
  EXPECT_EQ(encode_one("push", rbp), (std::vector<std::uint8_t>{0x55}));
  const std::vector<Operand> r12 = {r64(12)};
  EXPECT_EQ(encode_one("pop", r12), (std::vector<std::uint8_t>{0x41, 0x5C}));
  const std::vector<Operand> movs = {r64(5), r64(4)};
  EXPECT_EQ(encode_one("mov", movs), (std::vector<std::uint8_t>{0x48, 0x89, 0xE5}));
}

TEST(Encode, BranchIsRel32FromEnd) {
  const std::vector<Operand> ops = {PcRel{0x4023}};
  EXPECT_EQ(encode_one("jmp", ops, 0x401E), (std::vector<std::uint8_t>{0xE9, 0x00, 0x00, 0x00, 0x00}));
  EXPECT_EQ(encode_one("je", ops, 0x4000), (std::vector<std::uint8_t>{0x0F, 0x84, 0x1D, 0x00, 0x00, 0x00}));
}

TEST(Encode, MovImm64RoundTrips) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    const auto v = static_cast<std::int64_t>(rng());
    const std::vector<Operand> ops = {r64(static_cast<std::uint8_t>(i % 16)), Immediate{v}};
    const auto bytes = encode_one("mov", ops);
    const auto back = decode_one(bytes, 0);
    EXPECT_EQ(back.operands, ops);
    EXPECT_EQ(back.length, bytes.size());
  }
}

TEST(Encode, UnsupportedFormsAndRanges) {
  const std::vector<Operand> two_imm = {Immediate{1}, Immediate{2}};
  EXPECT_THROW(encode_one("mov", two_imm), Error);
  const std::vector<Operand> far = {PcRel{0x400000000}};
  try {
    encode_one("jmp", far, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::RangeOverflow);
  }
  MemRef rsp_index;
  rsp_index.base = Reg{0, 64};
  rsp_index.index = Reg{4, 64};
  const std::vector<Operand> bad = {r64(0), rsp_index};
  EXPECT_THROW(encode_one("lea", bad), Error);
}

TEST(Classify, FlowKinds) {
  EXPECT_EQ(instruction_class(dec({0xFF, 0xE2})).kind, FlowKind::IndirectJump);  // jmp rdx
  EXPECT_EQ(instruction_class(dec({0xC3})).kind, FlowKind::Return);
  EXPECT_EQ(instruction_class(dec({0x48, 0x01, 0xCA})).kind, FlowKind::Fallthrough);  // add rdx, rcx
  EXPECT_EQ(instruction_class(dec({0xF4})).kind, FlowKind::Halt);
  EXPECT_EQ(instruction_class(dec({0xFF, 0xD0})).kind, FlowKind::IndirectCall);
  const auto je = instruction_class(dec({0x0F, 0x84, 0x10, 0x00, 0x00, 0x00}, 0x4000));
  EXPECT_EQ(je.kind, FlowKind::ConditionalJump);
  EXPECT_EQ(je.target, std::optional<Address>(0x4016));
  const auto call = instruction_class(dec({0xE8, 0x00, 0x00, 0x00, 0x00}, 0x4000));
  EXPECT_EQ(call.kind, FlowKind::Call);
  EXPECT_EQ(call.target, std::optional<Address>(0x4005));
}

TEST(Registers, NamesRoundTrip) {
  for (std::uint8_t n = 0; n < 16; ++n) {
    for (std::uint8_t bits : {32, 64}) {
      const Reg r{n, bits};
      EXPECT_EQ(parse_reg(reg_name(r)), std::optional<Reg>(r));
    }
  }
  EXPECT_FALSE(parse_reg("rip").has_value());
  EXPECT_EQ(canonical_mnemonic("jnz"), "jne");
  EXPECT_TRUE(is_mnemonic("jz"));
  EXPECT_FALSE(is_mnemonic("movabs"));
}

TEST(IsaProperty, EveryEncodableFormIsReachable) {
  test::InsnGenerator gen(1);
  for (const auto* f : gen.encodable()) {
    const auto c = gen.for_form(*f);
    EXPECT_EQ(c.form, f) << f->mnemonic << " opcode " << hex(f->opcode[0]);
  }
}

TEST(IsaProperty, DecodeInvertsEncodeAcrossTable) {
  test::InsnGenerator gen(0xC0DE);
  std::map<const Form*, int> hits;
  for (int i = 0; i < 6000; ++i) {
    const auto c = gen.next();
    ASSERT_NE(c.form, nullptr);
    const auto bytes = encode_one(c.form->mnemonic, c.operands, c.at);
    const auto d = decode_one(bytes, c.at);
    ASSERT_EQ(d.length, bytes.size()) << format_instruction(d);
    ASSERT_EQ(d.mnemonic, c.form->mnemonic);
    ASSERT_EQ(d.operands, c.operands) << format_instruction(d);
    ASSERT_EQ(encode_one(d.mnemonic, d.operands, c.at), bytes);
    ++hits[c.form];
  }
  EXPECT_EQ(hits.size(), gen.encodable().size());
}
