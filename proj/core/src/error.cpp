#include "ellf/error.hpp"

#include <cstdio>

namespace ellf {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvariantViolation: return "InvariantViolation";
    case ErrorKind::BadMagic: return "BadMagic";
    case ErrorKind::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorKind::TruncatedTable: return "TruncatedTable";
    case ErrorKind::NonCanonical: return "NonCanonical";
    case ErrorKind::VarintOverflow: return "VarintOverflow";
    case ErrorKind::InconsistentFacts: return "InconsistentFacts";
    case ErrorKind::BadJson: return "BadJson";
    case ErrorKind::NotElf: return "NotElf";
    case ErrorKind::UnsupportedClass: return "UnsupportedClass";
    case ErrorKind::UnsupportedEndianness: return "UnsupportedEndianness";
    case ErrorKind::MalformedHeader: return "MalformedHeader";
    case ErrorKind::OverlapError: return "OverlapError";
    case ErrorKind::DuplicateSection: return "DuplicateSection";
    case ErrorKind::SectionNotFound: return "SectionNotFound";
    case ErrorKind::UnknownOpcode: return "UnknownOpcode";
    case ErrorKind::TruncatedInstruction: return "TruncatedInstruction";
    case ErrorKind::UnsupportedForm: return "UnsupportedForm";
    case ErrorKind::RegionDecodeError: return "RegionDecodeError";
    case ErrorKind::RegionOverlap: return "RegionOverlap";
    case ErrorKind::OperandIndexOutOfRange: return "OperandIndexOutOfRange";
    case ErrorKind::NotAPointerPosition: return "NotAPointerPosition";
    case ErrorKind::PointerMismatch: return "PointerMismatch";
    case ErrorKind::DanglingTextRecord: return "DanglingTextRecord";
    case ErrorKind::PointerStraddle: return "PointerStraddle";
    case ErrorKind::TargetOutsideFunction: return "TargetOutsideFunction";
    case ErrorKind::InvalidMetadata: return "InvalidMetadata";
    case ErrorKind::SyntaxError: return "SyntaxError";
    case ErrorKind::DuplicateLabel: return "DuplicateLabel";
    case ErrorKind::UnknownDirective: return "UnknownDirective";
    case ErrorKind::UndefinedLabel: return "UndefinedLabel";
    case ErrorKind::RangeOverflow: return "RangeOverflow";
    case ErrorKind::SectionOverlap: return "SectionOverlap";
  }
  return "Unknown";
}

std::string_view to_string(DiagKind kind) {
  switch (kind) {
    case DiagKind::RangeDiagnostic: return "RangeDiagnostic";
    case DiagKind::AlignmentDiagnostic: return "AlignmentDiagnostic";
    case DiagKind::RegionDiagnostic: return "RegionDiagnostic";
    case DiagKind::StackDiagnostic: return "StackDiagnostic";
    case DiagKind::OverlapDropped: return "OverlapDropped";
    case DiagKind::InconsistentFacts: return "InconsistentFacts";
    case DiagKind::PointerMismatch: return "PointerMismatch";
    case DiagKind::StackAccessOutsideSlots: return "StackAccessOutsideSlots";
    case DiagKind::DegradedOracle: return "DegradedOracle";
    case DiagKind::LiftError: return "LiftError";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind), message_(message) {}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

std::string hex(std::uint64_t value) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "0x%llx", static_cast<unsigned long long>(value));
  return buf;
}

std::string format_diagnostic(const Diagnostic& d) {
  std::string out = d.severity == Severity::Error ? "error: " : "warning: ";
  out += to_string(d.kind);
  if (d.kind == DiagKind::LiftError) {
    out += " (";
    out += to_string(d.error);
    out += ")";
  }
  out += " at " + hex(d.addr) + ": " + d.message;
  return out;
}

}  // namespace ellf
