#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ellf/error.hpp"

namespace ellf {

/// Sparse byte image keyed by virtual address. Contiguous runs are merged, so
/// two images compare equal exactly when they hold the same address->byte map.
class MemoryImage {
 public:
  /// Throws OverlapError if any byte of [base, base + bytes.size()) is already present.
  void add(Address base, std::span<const std::uint8_t> bytes);

  std::optional<std::uint8_t> at(Address addr) const;
  bool contains(Address addr, std::uint64_t length = 1) const;

  /// Bytes from `addr` to the end of its contiguous run; empty if unmapped.
  std::span<const std::uint8_t> tail(Address addr) const;

  /// Copies [addr, addr + length); throws Error(RangeOverflow) unless fully mapped.
  std::vector<std::uint8_t> read(Address addr, std::uint64_t length) const;

  std::uint64_t size() const;
  bool empty() const { return chunks_.empty(); }
  const std::map<Address, std::vector<std::uint8_t>>& chunks() const { return chunks_; }

  bool operator==(const MemoryImage&) const = default;

 private:
  std::map<Address, std::vector<std::uint8_t>> chunks_;
};

enum class SectionKind { Progbits, Nobits, Other };

struct SectionFlags {
  bool alloc = false;
  bool exec = false;
  bool write = false;

  bool operator==(const SectionFlags&) const = default;
};

struct Section {
  std::string name;
  std::uint32_t index = 0;
  std::uint32_t type = 0;
  Address vaddr = 0;
  std::uint64_t file_offset = 0;
  std::uint64_t size = 0;
  SectionFlags flags;
  SectionKind kind = SectionKind::Other;
  std::uint32_t link = 0;
  std::uint64_t entsize = 0;

  Address end() const { return vaddr + size; }
  bool contains(Address a) const { return a >= vaddr && a < end(); }
  bool is_code() const { return flags.alloc && flags.exec; }
  bool is_data() const { return flags.alloc && !flags.exec; }
};

/// Parsed ELF64 little-endian file. Holds the original bytes so writers can
/// preserve everything they do not touch.
struct ElfImage {
  Address entry_point = 0;
  std::vector<Section> sections;
  std::map<Address, std::string> dynamic_symbols;
  std::vector<std::uint8_t> raw_file;
  std::uint16_t shstrndx = 0;

  const Section* find_section(std::string_view name) const;
  const Section* section_containing(Address addr) const;
  std::vector<const Section*> alloc_sections() const;
};

inline constexpr std::uint32_t kSectionTypeEllf = 0x6fff4c46;

ElfImage read_elf(std::span<const std::uint8_t> bytes);
MemoryImage load_image(const ElfImage& img);
std::vector<std::uint8_t> inject_section(const ElfImage& img, const std::string& name,
                                         std::span<const std::uint8_t> payload);
std::vector<std::uint8_t> extract_section(const ElfImage& img, std::string_view name);

/// One section to be written by write_elf. `link` is a 1-based index into the
/// spec list (0 = none), matching the section header index in the output.
struct ElfSectionSpec {
  std::string name;
  Address vaddr = 0;
  SectionFlags flags;
  bool nobits = false;
  std::vector<std::uint8_t> bytes;
  std::uint64_t nobits_size = 0;
  std::uint32_t type = 0;  // 0 = derived (PROGBITS / NOBITS)
  std::uint32_t link = 0;
  std::uint64_t entsize = 0;
};

/// Writes an ET_EXEC x86-64 file with one PT_LOAD per alloc section.
std::vector<std::uint8_t> write_elf(Address entry, const std::vector<ElfSectionSpec>& sections);

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, std::span<const std::uint8_t> bytes);

}  // namespace ellf
