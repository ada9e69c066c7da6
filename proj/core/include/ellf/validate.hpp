#pragma once

#include <vector>

#include "ellf/elf.hpp"
#include "ellf/isa.hpp"
#include "ellf/metadata.hpp"

namespace ellf {

/// Decodes every instruction named by the regions, in address order.
/// Throws RegionDecodeError when a region runs into undecodable or unmapped
/// bytes and RegionOverlap when two regions cover the same instruction.
std::vector<isa::Instruction> decode_regions(const std::vector<InstructionRegion>& regions, const MemoryImage& image);

/// Cross-checks metadata against the binary it describes. An empty result
/// means every address the metadata names lands where it should.
std::vector<Diagnostic> validate_metadata(const EllfMetadata& meta, const ElfImage& image);

}  // namespace ellf
