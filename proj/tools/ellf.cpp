// ellf: inject, extract, lift, assemble and round-trip ELLF binaries.
//
// Exit status: 0 success, 1 domain failure, 2 I/O or usage failure.

#include <cstdio>
#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "ellf/asm.hpp"
#include "ellf/build_facts.hpp"
#include "ellf/lifter.hpp"
#include "ellf/validate.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kDomainFailure = 1;
constexpr int kIoFailure = 2;

// I/O problems are plain runtime_errors; domain problems are ellf::Error.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<std::uint8_t> load(const std::string& path) {
  try {
    return ellf::read_file(path);
  } catch (const ellf::Error&) {
    throw;
  } catch (const std::exception& e) {
    throw IoError(e.what());
  }
}

void store(const std::string& path, std::span<const std::uint8_t> bytes) {
  try {
    ellf::write_file(path, bytes);
  } catch (const std::exception& e) {
    throw IoError(e.what());
  }
}

std::string load_text(const std::string& path) {
  const auto bytes = load(path);
  return {bytes.begin(), bytes.end()};
}

ellf::Address parse_address(const std::string& text) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(text, &used, 0);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  throw CLI::ValidationError("address", "not a number: " + text);
}

void print_diagnostics(const std::vector<ellf::Diagnostic>& diags) {
  for (const auto& d : diags) std::cerr << ellf::format_diagnostic(d) << '\n';
}

std::uint64_t alloc_bytes(const ellf::ElfImage& img) {
  std::uint64_t total = 0;
  for (const auto* s : img.alloc_sections()) total += s->size;
  return total;
}

int cmd_inject(const std::string& in, const std::string& meta_path, const std::string& facts_path, const std::string& out) {
  const ellf::ElfImage img = ellf::read_elf(load(in));
  ellf::EllfMetadata meta;
  if (!meta_path.empty()) {
    meta = ellf::metadata_from_json(load_text(meta_path));
  } else {
    auto result = ellf::from_build_facts(ellf::build_facts_from_json(load_text(facts_path)), ellf::load_image(img));
    print_diagnostics(result.diagnostics);
    if (result.has_errors()) return kDomainFailure;
    meta = std::move(result.meta);
  }
  const auto diags = ellf::validate_metadata(meta, img);
  if (!diags.empty()) {
    print_diagnostics(diags);
    return kDomainFailure;
  }
  const auto payload = ellf::encode_metadata(meta);
  store(out, ellf::inject_section(img, ellf::kEllfSectionName, payload));
  std::cout << "encoded metadata: " << payload.size() << " bytes\n";
  return kOk;
}

int cmd_extract(const std::string& in, bool json, const std::string& out) {
  const ellf::ElfImage img = ellf::read_elf(load(in));
  const auto payload = ellf::extract_section(img, ellf::kEllfSectionName);
  if (!out.empty()) {
    store(out, payload);
    return kOk;
  }
  if (json) {
    std::cout << ellf::metadata_to_json(ellf::decode_metadata(payload)) << '\n';
    return kOk;
  }
  for (std::size_t i = 0; i < payload.size(); ++i) {
    std::printf("%02x%c", payload[i], (i % 16 == 15 || i + 1 == payload.size()) ? '\n' : ' ');
  }
  return kOk;
}

int cmd_lift(const std::string& in, const std::string& out, bool strict) {
  const ellf::ElfImage img = ellf::read_elf(load(in));
  const auto meta = ellf::decode_metadata(ellf::extract_section(img, ellf::kEllfSectionName));
  if (meta.pointers.empty() && meta.text.empty() && meta.data.empty() && meta.stack.empty()) {
    std::cerr << "warning: metadata has only instruction regions; output is coarsely symbolized\n";
  }
  const auto lp = ellf::lift(img, meta, strict ? ellf::LiftMode::Strict : ellf::LiftMode::Lenient);
  const std::string text = ellf::emit_assembly(lp);
  store(out, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));

  print_diagnostics(lp.diagnostics);
  std::map<std::string, int> counts;
  for (const auto& d : lp.diagnostics) ++counts[std::string(ellf::to_string(d.kind))];
  std::cout << "instructions: " << lp.instructions.size() << ", variables: " << lp.variables.size()
            << ", functions: " << lp.cfgs.size() << ", diagnostics: " << lp.diagnostics.size() << '\n';
  for (const auto& [kind, n] : counts) std::cout << "  " << kind << ": " << n << '\n';
  return kOk;
}

int cmd_asm(const std::string& in, const ellf::AsmOptions& opts, const std::string& out) {
  const auto result = ellf::assemble_text(load_text(in), opts);
  store(out, result.elf);
  return kOk;
}

int cmd_roundtrip(const std::string& in, const ellf::AsmOptions& opts) {
  const auto report = ellf::roundtrip_check(load_text(in), opts);
  if (report.error_kind) {
    std::cout << "error: " << ellf::to_string(*report.error_kind) << ": " << report.error << '\n';
    if (*report.error_kind == ellf::ErrorKind::PointerStraddle) {
      std::cout << "note: a pointer crosses a variable boundary; the merged object's value depends on its placement\n";
    }
  }
  auto line = [](const char* what, bool ok) { std::cout << what << ": " << (ok ? "PASS" : "FAIL") << '\n'; };
  line("byte identity", report.bytes_equal);
  line("metadata fixpoint", report.metadata_equal);
  line("text fixpoint", report.text_fixpoint);
  return report.passed() ? kOk : kDomainFailure;
}

int cmd_stats(const std::string& in) {
  const ellf::ElfImage img = ellf::read_elf(load(in));
  const auto payload = ellf::extract_section(img, ellf::kEllfSectionName);
  const auto meta = ellf::decode_metadata(payload);
  const auto alloc = alloc_bytes(img);
  std::cout << "alloc bytes: " << alloc << '\n';
  std::cout << ".ellf bytes: " << payload.size() << '\n';
  char ratio[32];
  std::snprintf(ratio, sizeof(ratio), "%.4f", alloc ? static_cast<double>(payload.size()) / static_cast<double>(alloc) : 0.0);
  std::cout << "ratio: " << ratio << '\n';
  for (const auto& t : ellf::table_stats(meta)) {
    std::cout << "  table " << int(t.id) << " " << t.name << ": " << t.records << " records, " << t.encoded_bytes
              << " bytes\n";
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ELLF metadata toolkit"};
  app.require_subcommand(1, 1);

  std::string in, out, meta_path, facts_path, base_text = "0x401000", base_data;
  bool json = false, strict = false;

  auto* inject = app.add_subcommand("inject", "Embed metadata into an ELF file as .ellf");
  inject->add_option("input", in, "ELF file")->required();
  auto* meta_opt = inject->add_option("--meta", meta_path, "metadata JSON");
  auto* facts_opt = inject->add_option("--facts", facts_path, "build facts JSON");
  meta_opt->excludes(facts_opt);
  inject->add_option("-o,--output", out, "output file")->required();

  auto* extract = app.add_subcommand("extract", "Print the .ellf metadata of a file");
  extract->add_option("input", in, "ELLF file")->required();
  extract->add_flag("--json", json, "print the JSON form");
  extract->add_option("-o,--output", out, "write the raw section bytes to a file");

  auto* lift = app.add_subcommand("lift", "Lift an ELLF file to assembly");
  lift->add_option("input", in, "ELLF file")->required();
  lift->add_option("-o,--output", out, "assembly output")->required();
  lift->add_flag("--strict", strict, "treat metadata problems as errors");

  auto* asm_cmd = app.add_subcommand("asm", "Assemble dialect source into an ELLF file");
  asm_cmd->add_option("input", in, "assembly source")->required();
  asm_cmd->add_option("--base-text", base_text, "base of code sections without base=");
  asm_cmd->add_option("--base-data", base_data, "base of other sections without base= (default: the page after the code)");
  asm_cmd->add_option("-o,--output", out, "output file")->required();

  auto* roundtrip = app.add_subcommand("roundtrip", "Assemble, lift and reassemble, then compare");
  roundtrip->add_option("input", in, "assembly source")->required();
  roundtrip->add_option("--base-text", base_text, "base of code sections without base=");
  roundtrip->add_option("--base-data", base_data, "base of other sections without base= (default: the page after the code)");

  auto* stats = app.add_subcommand("stats", "Report metadata size against allocated bytes");
  stats->add_option("input", in, "ELLF file")->required();

  try {
    app.parse(argc, argv);
    if (inject->parsed() && meta_path.empty() && facts_path.empty()) {
      throw CLI::RequiredError("--meta or --facts");
    }
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kIoFailure;
  }

  try {
    ellf::AsmOptions opts;
    if (asm_cmd->parsed() || roundtrip->parsed()) {
      opts.base_text = parse_address(base_text);
      if (!base_data.empty()) opts.base_data = parse_address(base_data);
    }
    if (inject->parsed()) return cmd_inject(in, meta_path, facts_path, out);
    if (extract->parsed()) return cmd_extract(in, json, out);
    if (lift->parsed()) return cmd_lift(in, out, strict);
    if (asm_cmd->parsed()) return cmd_asm(in, opts, out);
    if (roundtrip->parsed()) return cmd_roundtrip(in, opts);
    if (stats->parsed()) return cmd_stats(in);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIoFailure;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIoFailure;
  } catch (const ellf::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDomainFailure;
  }
  return kIoFailure;
}
