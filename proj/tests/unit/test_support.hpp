#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ellf/metadata.hpp"

namespace ellf::test {

inline std::filesystem::path data_dir() { return ELLF_TEST_DATA_DIR; }

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::vector<std::filesystem::path> corpus_files() {
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(data_dir() / "corpus")) {
    if (e.path().extension() == ".s") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

// The worked example: one function with a two-entry jump table at 0x4024.
inline EllfMetadata dispatch_meta() {
  EllfMetadata m;
  m.instruction_regions = {{0x4000, 10}};
  m.pointers = {OperandPointer{0x4004, 1, 0x4024}, DataDiff{0x4024, 0x4014, 0x4024, 8},
                DataDiff{0x402C, 0x401C, 0x4024, 8}};
  m.text = {{0x4000, TextKind::FunctionStart}, {0x4014, TextKind::BasicBlock}, {0x4023, TextKind::FunctionEnd}};
  m.data = {{0x4024, 8}, {0x402C, 8}};
  return m;
}

inline const std::vector<std::uint8_t>& dispatch_encoded() {
  static const std::vector<std::uint8_t> bytes = {
      0x45, 0x4C, 0x4C, 0x46, 0x01,                    // magic, version
      0x01, 0x01, 0x80, 0x80, 0x01, 0x0A,              // regions
      0x02, 0x03, 0x84, 0x80, 0x01, 0x00, 0x01, 0x40,  // pointers
      0x20, 0x02, 0x1F, 0x00, 0x08, 0x02, 0x1F, 0x0F,
      0x03, 0x03, 0x80, 0x80, 0x01, 0x01, 0x14, 0x00, 0x0F, 0x02,  // text
      0x04, 0x00,                                                  // stack
      0x05, 0x02, 0xA4, 0x80, 0x01, 0x08, 0x08, 0x08,              // data
  };
  return bytes;
}

}  // namespace ellf::test
