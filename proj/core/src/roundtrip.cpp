#include "ellf/asm.hpp"
#include "ellf/lifter.hpp"

namespace ellf {

namespace {

LiftedProgram lift_binary(const std::vector<std::uint8_t>& elf) {
  const ElfImage img = read_elf(elf);
  const EllfMetadata meta = decode_metadata(extract_section(img, kEllfSectionName));
  return lift(img, meta, LiftMode::Strict);
}

}  // namespace

RoundtripReport roundtrip_check(const std::string& source, const AsmOptions& options) {
  RoundtripReport report;
  try {
    const AsmOutput first = assemble_text(source, options);
    report.lifted_text = emit_assembly(lift_binary(first.elf));

    const AsmOutput second = assemble_text(report.lifted_text, options);
    report.bytes_equal = load_image(read_elf(first.elf)) == load_image(read_elf(second.elf));
    report.metadata_equal = first.meta == second.meta;
    report.text_fixpoint = emit_assembly(lift_binary(second.elf)) == report.lifted_text;
  } catch (const Error& e) {
    report.error_kind = e.kind();
    report.error = e.message();
  }
  return report;
}

}  // namespace ellf
