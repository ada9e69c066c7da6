#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace ellf::varint {

// Unsigned LEB128: 7 data bits per byte, low group first, high bit = continuation.
void put_u(std::vector<std::uint8_t>& out, std::uint64_t value);
void put_s(std::vector<std::uint8_t>& out, std::int64_t value);

std::size_t size_u(std::uint64_t value);

inline std::uint64_t zigzag(std::int64_t v) {
  return (static_cast<std::uint64_t>(v) << 1) ^ static_cast<std::uint64_t>(v >> 63);
}

inline std::int64_t unzigzag(std::uint64_t v) {
  return static_cast<std::int64_t>(v >> 1) ^ -static_cast<std::int64_t>(v & 1);
}

// Bounds-checked cursor over an encoded buffer. Every read either succeeds or
// throws ellf::Error (TruncatedTable, VarintOverflow, NonCanonical).
class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint8_t byte();
  std::uint64_t u();
  std::int64_t s();

  bool at_end() const { return pos_ == bytes_.size(); }
  std::size_t position() const { return pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace ellf::varint
