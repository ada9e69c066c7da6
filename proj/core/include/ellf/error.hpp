#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ellf {

using Address = std::uint64_t;

enum class ErrorKind {
  // metadata codec
  InvariantViolation,
  BadMagic,
  UnsupportedVersion,
  TruncatedTable,
  NonCanonical,
  VarintOverflow,
  InconsistentFacts,
  BadJson,
  // elf
  NotElf,
  UnsupportedClass,
  UnsupportedEndianness,
  MalformedHeader,
  OverlapError,
  DuplicateSection,
  SectionNotFound,
  // isa
  UnknownOpcode,
  TruncatedInstruction,
  UnsupportedForm,
  // lifter
  RegionDecodeError,
  RegionOverlap,
  OperandIndexOutOfRange,
  NotAPointerPosition,
  PointerMismatch,
  DanglingTextRecord,
  PointerStraddle,
  TargetOutsideFunction,
  InvalidMetadata,
  // mini-asm
  SyntaxError,
  DuplicateLabel,
  UnknownDirective,
  UndefinedLabel,
  RangeOverflow,
  SectionOverlap,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const { return kind_; }
  // The message without the kind prefix that what() carries.
  const std::string& message() const { return message_; }

 private:
  ErrorKind kind_;
  std::string message_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

enum class Severity { Warning, Error };

enum class DiagKind {
  RangeDiagnostic,
  AlignmentDiagnostic,
  RegionDiagnostic,
  StackDiagnostic,
  OverlapDropped,
  InconsistentFacts,
  PointerMismatch,
  StackAccessOutsideSlots,
  DegradedOracle,
  LiftError,
};

std::string_view to_string(DiagKind kind);

struct Diagnostic {
  Severity severity = Severity::Error;
  DiagKind kind = DiagKind::RangeDiagnostic;
  Address addr = 0;
  std::string message;
  // Set for DiagKind::LiftError so callers can recover the typed error.
  ErrorKind error = ErrorKind::InvalidMetadata;

  bool operator==(const Diagnostic&) const = default;
};

std::string format_diagnostic(const Diagnostic& d);

std::string hex(std::uint64_t value);

}  // namespace ellf
