#include "ellf/varint.hpp"

#include "ellf/error.hpp"

namespace ellf::varint {

void put_u(std::vector<std::uint8_t>& out, std::uint64_t value) {
  while (value > 0x7f) {
    out.push_back(static_cast<std::uint8_t>(0x80 | (value & 0x7f)));
    value >>= 7;
  }
  out.push_back(static_cast<std::uint8_t>(value));
}

void put_s(std::vector<std::uint8_t>& out, std::int64_t value) { put_u(out, zigzag(value)); }

std::size_t size_u(std::uint64_t value) {
  std::size_t n = 1;
  while (value > 0x7f) {
    ++n;
    value >>= 7;
  }
  return n;
}

std::uint8_t Reader::byte() {
  if (pos_ >= bytes_.size()) fail(ErrorKind::TruncatedTable, "unexpected end of data at offset " + std::to_string(pos_));
  return bytes_[pos_++];
}

std::uint64_t Reader::u() {
  const std::size_t start = pos_;
  std::uint64_t value = 0;
  for (unsigned i = 0;; ++i) {
    const std::uint8_t b = byte();
    if (i == 9 && b > 1) fail(ErrorKind::VarintOverflow, "varint exceeds 64 bits at offset " + std::to_string(start));
    value |= static_cast<std::uint64_t>(b & 0x7f) << (7 * i);
    if ((b & 0x80) == 0) {
      if (b == 0 && i > 0) fail(ErrorKind::NonCanonical, "non-minimal varint at offset " + std::to_string(start));
      return value;
    }
  }
}

std::int64_t Reader::s() { return unzigzag(u()); }

}  // namespace ellf::varint
