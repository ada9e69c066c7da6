#pragma once

#include "ellf/isa.hpp"

namespace ellf::isa::detail {

inline std::uint8_t kind_width(OpKind k) {
  switch (k) {
    case OpKind::R64:
    case OpKind::RM64:
    case OpKind::M64: return 64;
    case OpKind::R32:
    case OpKind::RM32:
    case OpKind::M32: return 32;
    default: return 0;
  }
}

// Memory operands of forms without a register operand must spell out their size.
inline bool mem_needs_width(const Form& f) { return f.enc == Encoding::M || f.enc == Encoding::MI; }

}  // namespace ellf::isa::detail
