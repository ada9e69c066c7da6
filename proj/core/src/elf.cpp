#include "ellf/elf.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <iterator>

namespace ellf {

// ---------------------------------------------------------------- MemoryImage

void MemoryImage::add(Address base, std::span<const std::uint8_t> bytes) {
  if (bytes.empty()) return;
  const Address end = base + bytes.size();
  if (end < base) fail(ErrorKind::OverlapError, "range at " + hex(base) + " wraps the address space");

  auto next = chunks_.lower_bound(base);
  if (next != chunks_.end() && next->first < end) {
    fail(ErrorKind::OverlapError, "bytes at " + hex(next->first) + " already mapped");
  }
  if (next != chunks_.begin()) {
    auto prev = std::prev(next);
    if (prev->first + prev->second.size() > base) {
      fail(ErrorKind::OverlapError, "bytes at " + hex(base) + " already mapped");
    }
  }

  std::vector<std::uint8_t> merged(bytes.begin(), bytes.end());
  Address merged_base = base;
  if (next != chunks_.begin()) {
    auto prev = std::prev(next);
    if (prev->first + prev->second.size() == base) {
      merged_base = prev->first;
      merged.insert(merged.begin(), prev->second.begin(), prev->second.end());
      chunks_.erase(prev);
    }
  }
  if (next != chunks_.end() && next->first == end) {
    merged.insert(merged.end(), next->second.begin(), next->second.end());
    chunks_.erase(next);
  }
  chunks_.emplace(merged_base, std::move(merged));
}

std::span<const std::uint8_t> MemoryImage::tail(Address addr) const {
  auto it = chunks_.upper_bound(addr);
  if (it == chunks_.begin()) return {};
  --it;
  const Address offset = addr - it->first;
  if (offset >= it->second.size()) return {};
  return std::span<const std::uint8_t>(it->second).subspan(offset);
}

std::optional<std::uint8_t> MemoryImage::at(Address addr) const {
  const auto t = tail(addr);
  if (t.empty()) return std::nullopt;
  return t.front();
}

bool MemoryImage::contains(Address addr, std::uint64_t length) const {
  if (length == 0) return true;
  return tail(addr).size() >= length;
}

std::vector<std::uint8_t> MemoryImage::read(Address addr, std::uint64_t length) const {
  const auto t = tail(addr);
  if (t.size() < length) fail(ErrorKind::RangeOverflow, "image does not map " + std::to_string(length) + " bytes at " + hex(addr));
  return {t.begin(), t.begin() + static_cast<std::ptrdiff_t>(length)};
}

std::uint64_t MemoryImage::size() const {
  std::uint64_t total = 0;
  for (const auto& [base, bytes] : chunks_) total += bytes.size();
  return total;
}

// ------------------------------------------------------------------- layout

namespace {

constexpr std::uint32_t SHT_PROGBITS = 1;
constexpr std::uint32_t SHT_STRTAB = 3;
constexpr std::uint32_t SHT_NOBITS = 8;
constexpr std::uint32_t SHT_DYNSYM = 11;
constexpr std::uint64_t SHF_WRITE = 0x1;
constexpr std::uint64_t SHF_ALLOC = 0x2;
constexpr std::uint64_t SHF_EXECINSTR = 0x4;

constexpr std::size_t kEhdrSize = 64;
constexpr std::size_t kShdrSize = 64;
constexpr std::size_t kPhdrSize = 56;
constexpr std::size_t kSymSize = 24;

// Ehdr field offsets.
constexpr std::size_t E_ENTRY = 24, E_PHOFF = 32, E_SHOFF = 40, E_PHENTSIZE = 54, E_PHNUM = 56, E_SHENTSIZE = 58,
                      E_SHNUM = 60, E_SHSTRNDX = 62;

template <typename T>
T get(std::span<const std::uint8_t> b, std::size_t off) {
  T v{};
  std::memcpy(&v, b.data() + off, sizeof(T));
  return v;  // host is little-endian x86-64
}

template <typename T>
void put(std::vector<std::uint8_t>& b, std::size_t off, T v) {
  std::memcpy(b.data() + off, &v, sizeof(T));
}

template <typename T>
void append(std::vector<std::uint8_t>& b, T v) {
  const auto at = b.size();
  b.resize(at + sizeof(T));
  put(b, at, v);
}

void pad_to(std::vector<std::uint8_t>& b, std::size_t align) {
  while (b.size() % align != 0) b.push_back(0);
}

// Checked a + b <= limit without overflow.
bool fits(std::uint64_t offset, std::uint64_t length, std::uint64_t limit) {
  return offset <= limit && length <= limit - offset;
}

struct RawShdr {
  std::uint32_t name, type;
  std::uint64_t flags, addr, offset, size;
  std::uint32_t link, info;
  std::uint64_t addralign, entsize;
};

RawShdr read_shdr(std::span<const std::uint8_t> b, std::size_t off) {
  RawShdr s{};
  s.name = get<std::uint32_t>(b, off + 0);
  s.type = get<std::uint32_t>(b, off + 4);
  s.flags = get<std::uint64_t>(b, off + 8);
  s.addr = get<std::uint64_t>(b, off + 16);
  s.offset = get<std::uint64_t>(b, off + 24);
  s.size = get<std::uint64_t>(b, off + 32);
  s.link = get<std::uint32_t>(b, off + 40);
  s.info = get<std::uint32_t>(b, off + 44);
  s.addralign = get<std::uint64_t>(b, off + 48);
  s.entsize = get<std::uint64_t>(b, off + 56);
  return s;
}

void append_shdr(std::vector<std::uint8_t>& b, const RawShdr& s) {
  append(b, s.name);
  append(b, s.type);
  append(b, s.flags);
  append(b, s.addr);
  append(b, s.offset);
  append(b, s.size);
  append(b, s.link);
  append(b, s.info);
  append(b, s.addralign);
  append(b, s.entsize);
}

std::string read_cstr(std::span<const std::uint8_t> table, std::uint64_t offset) {
  if (offset >= table.size()) fail(ErrorKind::MalformedHeader, "string offset " + std::to_string(offset) + " out of range");
  const auto* begin = table.data() + offset;
  const auto* end = static_cast<const std::uint8_t*>(std::memchr(begin, 0, table.size() - offset));
  if (end == nullptr) fail(ErrorKind::MalformedHeader, "unterminated string in string table");
  return std::string(reinterpret_cast<const char*>(begin), reinterpret_cast<const char*>(end));
}

}  // namespace

// ------------------------------------------------------------------ ElfImage

const Section* ElfImage::find_section(std::string_view name) const {
  for (const auto& s : sections) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

const Section* ElfImage::section_containing(Address addr) const {
  for (const auto& s : sections) {
    if (s.flags.alloc && s.contains(addr)) return &s;
  }
  return nullptr;
}

std::vector<const Section*> ElfImage::alloc_sections() const {
  std::vector<const Section*> out;
  for (const auto& s : sections) {
    if (s.flags.alloc && s.size > 0) out.push_back(&s);
  }
  std::ranges::sort(out, {}, &Section::vaddr);
  return out;
}

ElfImage read_elf(std::span<const std::uint8_t> b) {
  static constexpr std::uint8_t kMagic[4] = {0x7f, 'E', 'L', 'F'};
  if (b.size() < 4 || std::memcmp(b.data(), kMagic, 4) != 0) fail(ErrorKind::NotElf, "missing ELF magic");
  if (b.size() < kEhdrSize) fail(ErrorKind::MalformedHeader, "file shorter than the ELF header");
  if (b[4] != 2) fail(ErrorKind::UnsupportedClass, "only ELFCLASS64 is supported");
  if (b[5] != 1) fail(ErrorKind::UnsupportedEndianness, "only little-endian ELF is supported");

  ElfImage img;
  img.raw_file.assign(b.begin(), b.end());
  img.entry_point = get<std::uint64_t>(b, E_ENTRY);
  const auto shoff = get<std::uint64_t>(b, E_SHOFF);
  const auto shentsize = get<std::uint16_t>(b, E_SHENTSIZE);
  const auto shnum = get<std::uint16_t>(b, E_SHNUM);
  img.shstrndx = get<std::uint16_t>(b, E_SHSTRNDX);

  if (shnum == 0) return img;
  if (shentsize != kShdrSize) fail(ErrorKind::MalformedHeader, "unexpected section header size");
  if (!fits(shoff, std::uint64_t{shnum} * kShdrSize, b.size())) {
    fail(ErrorKind::MalformedHeader, "section header table outside the file");
  }
  if (img.shstrndx >= shnum) fail(ErrorKind::MalformedHeader, "section name table index out of range");

  std::vector<RawShdr> raw;
  for (std::uint32_t i = 0; i < shnum; ++i) raw.push_back(read_shdr(b, shoff + i * kShdrSize));

  const auto file_bytes = [&](const RawShdr& s) -> std::span<const std::uint8_t> {
    if (s.type == SHT_NOBITS) return {};
    if (!fits(s.offset, s.size, b.size())) fail(ErrorKind::MalformedHeader, "section data outside the file");
    return b.subspan(s.offset, s.size);
  };

  const auto names = img.shstrndx != 0 ? file_bytes(raw[img.shstrndx]) : std::span<const std::uint8_t>{};
  for (std::uint32_t i = 1; i < shnum; ++i) {
    const auto& r = raw[i];
    Section s;
    s.name = img.shstrndx != 0 ? read_cstr(names, r.name) : std::string{};
    s.index = i;
    s.type = r.type;
    s.vaddr = r.addr;
    s.file_offset = r.offset;
    s.size = r.size;
    s.flags = {(r.flags & SHF_ALLOC) != 0, (r.flags & SHF_EXECINSTR) != 0, (r.flags & SHF_WRITE) != 0};
    s.kind = r.type == SHT_PROGBITS ? SectionKind::Progbits : r.type == SHT_NOBITS ? SectionKind::Nobits : SectionKind::Other;
    s.link = r.link;
    s.entsize = r.entsize;
    if (s.kind != SectionKind::Nobits) file_bytes(r);
    if (s.flags.alloc && s.vaddr + s.size < s.vaddr) fail(ErrorKind::MalformedHeader, "section " + s.name + " wraps");
    img.sections.push_back(std::move(s));
  }

  for (std::uint32_t i = 1; i < shnum; ++i) {
    const auto& r = raw[i];
    if (r.type != SHT_DYNSYM) continue;
    if (r.link == 0 || r.link >= shnum) fail(ErrorKind::MalformedHeader, "dynamic symbol table without string table");
    const auto syms = file_bytes(r);
    const auto strs = file_bytes(raw[r.link]);
    for (std::size_t off = kSymSize; off + kSymSize <= syms.size(); off += kSymSize) {
      const auto name = get<std::uint32_t>(syms, off);
      const auto value = get<std::uint64_t>(syms, off + 8);
      if (value == 0) continue;
      img.dynamic_symbols.emplace(value, read_cstr(strs, name));
    }
  }
  return img;
}

MemoryImage load_image(const ElfImage& img) {
  MemoryImage image;
  for (const auto& s : img.sections) {
    if (!s.flags.alloc || s.size == 0) continue;
    if (s.kind == SectionKind::Nobits) {
      image.add(s.vaddr, std::vector<std::uint8_t>(s.size, 0));
    } else {
      if (!fits(s.file_offset, s.size, img.raw_file.size())) fail(ErrorKind::MalformedHeader, "section data outside the file");
      image.add(s.vaddr, std::span<const std::uint8_t>(img.raw_file).subspan(s.file_offset, s.size));
    }
  }
  return image;
}

std::vector<std::uint8_t> extract_section(const ElfImage& img, std::string_view name) {
  const Section* s = img.find_section(name);
  if (s == nullptr) fail(ErrorKind::SectionNotFound, std::string(name));
  if (s->kind == SectionKind::Nobits) return {};
  if (!fits(s->file_offset, s->size, img.raw_file.size())) fail(ErrorKind::MalformedHeader, "section data outside the file");
  const auto begin = img.raw_file.begin() + static_cast<std::ptrdiff_t>(s->file_offset);
  return {begin, begin + static_cast<std::ptrdiff_t>(s->size)};
}

std::vector<std::uint8_t> inject_section(const ElfImage& img, const std::string& name,
                                         std::span<const std::uint8_t> payload) {
  if (img.find_section(name) != nullptr) fail(ErrorKind::DuplicateSection, name);
  std::span<const std::uint8_t> file(img.raw_file);
  if (file.size() < kEhdrSize) fail(ErrorKind::MalformedHeader, "file shorter than the ELF header");
  const auto shoff = get<std::uint64_t>(file, E_SHOFF);
  const auto shnum = get<std::uint16_t>(file, E_SHNUM);
  if (shnum == 0 || img.shstrndx == 0) fail(ErrorKind::MalformedHeader, "file has no section name table");
  if (shnum == 0xffff) fail(ErrorKind::MalformedHeader, "section header table is full");

  std::vector<RawShdr> raw;
  for (std::uint32_t i = 0; i < shnum; ++i) raw.push_back(read_shdr(file, shoff + i * kShdrSize));

  std::vector<std::uint8_t> out(file.begin(), file.end());

  // New name table: old contents plus the new name, appended after the file.
  RawShdr& strtab = raw[img.shstrndx];
  if (!fits(strtab.offset, strtab.size, file.size())) fail(ErrorKind::MalformedHeader, "name table outside the file");
  std::vector<std::uint8_t> names(file.begin() + static_cast<std::ptrdiff_t>(strtab.offset),
                                  file.begin() + static_cast<std::ptrdiff_t>(strtab.offset + strtab.size));
  if (names.empty()) names.push_back(0);
  const auto name_offset = static_cast<std::uint32_t>(names.size());
  names.insert(names.end(), name.begin(), name.end());
  names.push_back(0);

  pad_to(out, 8);
  strtab.offset = out.size();
  strtab.size = names.size();
  out.insert(out.end(), names.begin(), names.end());

  pad_to(out, 8);
  RawShdr added{};
  added.name = name_offset;
  added.type = kSectionTypeEllf;
  added.offset = out.size();
  added.size = payload.size();
  added.addralign = 1;
  out.insert(out.end(), payload.begin(), payload.end());
  raw.push_back(added);

  pad_to(out, 8);
  const std::uint64_t new_shoff = out.size();
  for (const auto& s : raw) append_shdr(out, s);
  put<std::uint64_t>(out, E_SHOFF, new_shoff);
  put<std::uint16_t>(out, E_SHNUM, static_cast<std::uint16_t>(raw.size()));
  return out;
}

// -------------------------------------------------------------------- writer

std::vector<std::uint8_t> write_elf(Address entry, const std::vector<ElfSectionSpec>& specs) {
  constexpr std::uint64_t kPage = 0x1000;
  std::size_t phnum = 0;
  for (const auto& s : specs) phnum += s.flags.alloc ? 1 : 0;

  std::vector<std::uint8_t> out(kEhdrSize + phnum * kPhdrSize, 0);
  std::vector<RawShdr> shdrs(1, RawShdr{});
  std::vector<std::uint8_t> names(1, 0);
  std::size_t ph = 0;

  for (const auto& s : specs) {
    RawShdr h{};
    h.name = static_cast<std::uint32_t>(names.size());
    names.insert(names.end(), s.name.begin(), s.name.end());
    names.push_back(0);
    h.type = s.type != 0 ? s.type : (s.nobits ? SHT_NOBITS : SHT_PROGBITS);
    h.flags = (s.flags.alloc ? SHF_ALLOC : 0) | (s.flags.exec ? SHF_EXECINSTR : 0) | (s.flags.write ? SHF_WRITE : 0);
    h.addr = s.vaddr;
    h.link = s.link;
    h.entsize = s.entsize;
    h.addralign = 1;
    h.size = s.nobits ? s.nobits_size : s.bytes.size();
    if (s.flags.alloc) {
      // File offset congruent to the vaddr modulo the page size, as loaders require.
      const std::uint64_t cur = out.size();
      const std::uint64_t want = s.vaddr % kPage;
      std::uint64_t off = cur - cur % kPage + want;
      if (off < cur) off += kPage;
      out.resize(off, 0);
    }
    h.offset = out.size();
    if (!s.nobits) out.insert(out.end(), s.bytes.begin(), s.bytes.end());

    if (s.flags.alloc) {
      const std::size_t at = kEhdrSize + ph++ * kPhdrSize;
      const std::uint32_t pflags = 4u | (s.flags.write ? 2u : 0u) | (s.flags.exec ? 1u : 0u);
      put<std::uint32_t>(out, at + 0, 1);  // PT_LOAD
      put<std::uint32_t>(out, at + 4, pflags);
      put<std::uint64_t>(out, at + 8, h.offset);
      put<std::uint64_t>(out, at + 16, s.vaddr);
      put<std::uint64_t>(out, at + 24, s.vaddr);
      put<std::uint64_t>(out, at + 32, s.nobits ? 0 : s.bytes.size());
      put<std::uint64_t>(out, at + 40, h.size);
      put<std::uint64_t>(out, at + 48, kPage);
    }
    shdrs.push_back(h);
  }

  RawShdr strtab{};
  strtab.name = static_cast<std::uint32_t>(names.size());
  static constexpr char kShstrtab[] = ".shstrtab";
  names.insert(names.end(), kShstrtab, kShstrtab + sizeof(kShstrtab));
  strtab.type = SHT_STRTAB;
  strtab.offset = out.size();
  strtab.size = names.size();
  strtab.addralign = 1;
  out.insert(out.end(), names.begin(), names.end());
  shdrs.push_back(strtab);

  pad_to(out, 8);
  const std::uint64_t shoff = out.size();
  for (const auto& h : shdrs) append_shdr(out, h);

  static constexpr std::uint8_t kIdent[16] = {0x7f, 'E', 'L', 'F', 2, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0};
  std::memcpy(out.data(), kIdent, sizeof(kIdent));
  put<std::uint16_t>(out, 16, 2);     // ET_EXEC
  put<std::uint16_t>(out, 18, 0x3e);  // EM_X86_64
  put<std::uint32_t>(out, 20, 1);
  put<std::uint64_t>(out, E_ENTRY, entry);
  put<std::uint64_t>(out, E_PHOFF, phnum > 0 ? kEhdrSize : 0);
  put<std::uint64_t>(out, E_SHOFF, shoff);
  put<std::uint32_t>(out, 48, 0);
  put<std::uint16_t>(out, 52, kEhdrSize);
  put<std::uint16_t>(out, E_PHENTSIZE, kPhdrSize);
  put<std::uint16_t>(out, E_PHNUM, static_cast<std::uint16_t>(phnum));
  put<std::uint16_t>(out, E_SHENTSIZE, kShdrSize);
  put<std::uint16_t>(out, E_SHNUM, static_cast<std::uint16_t>(shdrs.size()));
  put<std::uint16_t>(out, E_SHSTRNDX, static_cast<std::uint16_t>(shdrs.size() - 1));
  return out;
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing " + path);
}

}  // namespace ellf
