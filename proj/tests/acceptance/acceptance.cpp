// One PASS/FAIL line per acceptance criterion; exit status 1 if any fail.

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <regex>
#include <set>

#include "ellf/asm.hpp"
#include "ellf/lifter.hpp"
#include "ellf/validate.hpp"
#include "random_insn.hpp"
#include "random_meta.hpp"
#include "test_support.hpp"

using namespace ellf;

namespace {

// Measured on the bundled corpus when the size guard was introduced.
constexpr std::uint64_t kBaselineAllocBytes = 4753;
constexpr std::uint64_t kBaselineEllfBytes = 1871;
constexpr double kRatioLimit = 0.40;

struct Outcome {
  bool ok = false;
  std::string detail;
};

Outcome fail_with(std::string why) { return {false, std::move(why)}; }

struct Program {
  std::string name;
  std::string source;
  AsmOutput out;
  ElfImage elf;
};

std::vector<Program> load_corpus() {
  std::vector<Program> out;
  for (const auto& path : test::corpus_files()) {
    Program p;
    p.name = path.filename().string();
    p.source = test::read_text(path);
    p.out = assemble_text(p.source);
    p.elf = read_elf(p.out.elf);
    out.push_back(std::move(p));
  }
  return out;
}

const isa::Instruction& last_in_block(const LiftedProgram& lp, const CfgBlock& b) {
  return std::prev(lp.raw.lower_bound(b.end))->second;
}

std::set<std::string> features(const Program& p) {
  std::set<std::string> f;
  const auto lp = lift(p.elf, p.out.meta, LiftMode::Strict);
  std::size_t functions = 0;
  for (const auto& cfg : lp.cfgs) {
    ++functions;
    if (cfg.blocks.size() == 1) f.insert("straight-line");
    for (const auto& b : cfg.blocks) {
      for (Address s : b.successors) {
        if (s <= b.start) f.insert("loop");
      }
      const auto kind = isa::instruction_class(last_in_block(lp, b)).kind;
      if (kind == isa::FlowKind::ConditionalJump) f.insert("conditional");
      if (kind == isa::FlowKind::IndirectJump) f.insert("jump-table-" + std::to_string(b.successors.size()));
    }
  }
  if (functions >= 2) f.insert("multi-function");
  for (const auto& s : lp.sections) {
    if (s.nobits) f.insert("bss");
  }
  for (const auto& v : lp.variables) {
    const auto* sec = lp.section_containing(v.address);
    if (sec == nullptr || sec->flags.write) continue;
    for (const auto& pl : v.payload) {
      const auto* raw = std::get_if<RawBytes>(&pl);
      if (raw && raw->bytes.size() >= 3 && raw->bytes.back() == 0 && std::isprint(raw->bytes.front())) f.insert("rodata-string");
    }
  }
  for (const auto& st : p.out.meta.stack) {
    if (st.offsets == std::vector<std::uint64_t>{4, 32, 40}) f.insert("stack-slots-4-32-40");
  }
  return f;
}

Outcome corpus_roundtrip(const std::vector<Program>& corpus) {
  if (corpus.size() < 20) return fail_with("only " + std::to_string(corpus.size()) + " programs");
  std::set<std::string> seen;
  for (const auto& p : corpus) {
    const auto r = roundtrip_check(p.source);
    if (!r.passed()) {
      return fail_with(p.name + ": bytes=" + std::to_string(r.bytes_equal) + " meta=" + std::to_string(r.metadata_equal) +
                       " text=" + std::to_string(r.text_fixpoint) + " " + r.error);
    }
    const auto f = features(p);
    seen.insert(f.begin(), f.end());
  }
  std::string missing;
  for (const char* need : {"straight-line", "conditional", "loop", "multi-function", "jump-table-3", "jump-table-8",
                           "rodata-string", "bss", "stack-slots-4-32-40"}) {
    if (!seen.count(need)) missing += std::string(" ") + need;
  }
  if (!missing.empty()) return fail_with("coverage missing:" + missing);
  return {true, std::to_string(corpus.size()) + " programs, all three checks"};
}

Outcome dispatch_cfg() {
  const auto out = assemble_text(test::read_text(test::data_dir() / "fixtures/dispatch.s"));
  const auto meta = test::dispatch_meta();
  const auto lp = lift(read_elf(out.elf), meta, LiftMode::Strict);
  std::set<Address> diff_targets;
  for (const auto& rec : meta.pointers) {
    if (const auto* d = std::get_if<DataDiff>(&rec)) diff_targets.insert(d->minuend);
  }
  std::size_t indirect = 0;
  for (const auto& cfg : lp.cfgs) {
    for (const auto& b : cfg.blocks) {
      if (isa::instruction_class(last_in_block(lp, b)).kind != isa::FlowKind::IndirectJump) continue;
      ++indirect;
      const std::set<Address> succ(b.successors.begin(), b.successors.end());
      if (succ != diff_targets) return fail_with("indirect successors differ from the table targets");
    }
  }
  if (indirect != 1) return fail_with("expected one indirect jump, found " + std::to_string(indirect));
  const auto text = emit_assembly(lp);
  const std::regex diff_line(R"(\n  \.quad [.A-Za-z_][.\w]* - [.A-Za-z_][.\w]*\n)");
  const auto n = std::distance(std::sregex_iterator(text.begin(), text.end(), diff_line), std::sregex_iterator());
  if (n != 2) return fail_with("expected 2 LABEL - LABEL entries, found " + std::to_string(n));
  return {true, "successors {0x4014, 0x401c}, 2 label differences"};
}

Outcome codec_properties() {
  test::MetaGenerator gen(20240611);
  for (int i = 0; i < 1000; ++i) {
    const auto m = gen.next();
    const auto bytes = encode_metadata(m);
    const auto back = decode_metadata(bytes);
    if (!(back == m)) return fail_with("identity broke on case " + std::to_string(i));
    if (encode_metadata(back) != bytes) return fail_with("re-encode differs on case " + std::to_string(i));
  }
  std::mt19937_64 rng(77);
  for (int i = 0; i < 10000; ++i) {
    std::vector<std::uint8_t> bytes(rng() % 96);
    for (auto& b : bytes) b = static_cast<std::uint8_t>(rng());
    if (i % 2 == 0 && bytes.size() >= 5) bytes[0] = 'E', bytes[1] = 'L', bytes[2] = 'L', bytes[3] = 'F', bytes[4] = 1;
    try {
      decode_metadata(bytes);
    } catch (const Error&) {
    } catch (const std::exception& e) {
      return fail_with(std::string("non-domain exception: ") + e.what());
    }
  }
  return {true, "1000 identities, 10000 random inputs"};
}

std::vector<std::uint8_t> without_metadata(const ElfImage& img) {
  std::vector<ElfSectionSpec> specs;
  for (const auto* s : img.alloc_sections()) {
    ElfSectionSpec spec;
    spec.name = s->name;
    spec.vaddr = s->vaddr;
    spec.flags = s->flags;
    if (s->kind == SectionKind::Nobits) {
      spec.nobits = true;
      spec.nobits_size = s->size;
    } else {
      spec.bytes = extract_section(img, s->name);
    }
    specs.push_back(std::move(spec));
  }
  return write_elf(img.entry_point, specs);
}

Outcome injection_neutrality(const std::vector<Program>& corpus) {
  for (const auto& p : corpus) {
    const auto plain = read_elf(without_metadata(p.elf));
    const auto payload = encode_metadata(p.out.meta);
    const auto injected = read_elf(inject_section(plain, kEllfSectionName, payload));
    if (!(load_image(plain) == load_image(injected))) return fail_with(p.name + ": execution image changed");
    if (!(load_image(injected) == load_image(p.elf))) return fail_with(p.name + ": differs from the assembler output");
    if (extract_section(injected, kEllfSectionName) != payload) return fail_with(p.name + ": extract(inject(b)) != b");
    if (injected.entry_point != plain.entry_point) return fail_with(p.name + ": entry point moved");
  }
  return {true, std::to_string(corpus.size()) + " binaries"};
}

Outcome size_overhead(const std::vector<Program>& corpus) {
  std::uint64_t alloc = 0, ellf = 0;
  for (const auto& p : corpus) {
    for (const auto* s : p.elf.alloc_sections()) alloc += s->size;
    ellf += extract_section(p.elf, kEllfSectionName).size();
  }
  const double ratio = static_cast<double>(ellf) / static_cast<double>(alloc);
  const double baseline = static_cast<double>(kBaselineEllfBytes) / static_cast<double>(kBaselineAllocBytes);
  char buf[160];
  std::snprintf(buf, sizeof buf, "%llu / %llu = %.4f (limit %.2f, baseline %.4f)", static_cast<unsigned long long>(ellf),
                static_cast<unsigned long long>(alloc), ratio, kRatioLimit, baseline);
  if (ratio > kRatioLimit) return fail_with(buf);
  if (ratio > baseline + 1e-9) return fail_with(std::string(buf) + " regressed");
  return {true, buf};
}

Outcome order_commutativity(const std::vector<Program>& corpus) {
  const std::vector<std::string> picks = {"06_jump_table_3.s", "10_stack_slots.s", "21_mixed_sections.s",
                                          "22_two_frames.s", "27_bytecode_vm.s"};
  std::size_t checked = 0;
  for (const auto& p : corpus) {
    if (std::find(picks.begin(), picks.end(), p.name) == picks.end()) continue;
    std::array<SymbolizeStep, 3> order = {SymbolizeStep::Text, SymbolizeStep::Stack, SymbolizeStep::Data};
    std::sort(order.begin(), order.end());
    std::optional<std::string> first;
    int orders = 0;
    do {
      const auto text = emit_assembly(lift(p.elf, p.out.meta, LiftMode::Strict, order));
      if (!first) first = text;
      if (text != *first) return fail_with(p.name + ": output depends on step order");
      ++orders;
    } while (std::next_permutation(order.begin(), order.end()));
    if (orders != 6) return fail_with("expected 6 orderings");
    ++checked;
  }
  if (checked != picks.size()) return fail_with("missing corpus programs");
  return {true, "5 programs x 6 orderings"};
}

Outcome straddle_detection() {
  const auto bad = roundtrip_check(test::read_text(test::data_dir() / "fixtures/straddle.s"));
  if (bad.passed()) return fail_with("straddle fixture passed");
  if (bad.error_kind != ErrorKind::PointerStraddle) return fail_with("wrong diagnostic: " + bad.error);
  const auto good = roundtrip_check(test::read_text(test::data_dir() / "fixtures/single_ret.s"));
  if (!good.passed()) return fail_with("single-ret control failed: " + good.error);
  return {true, "PointerStraddle reported; control passes"};
}

Outcome decoder_closure(const std::vector<Program>& corpus) {
  test::InsnGenerator gen(0x5EED);
  std::set<const isa::Form*> covered;
  const int cases = 6000;
  for (int i = 0; i < cases; ++i) {
    const auto c = i < static_cast<int>(gen.encodable().size()) ? gen.for_form(*gen.encodable()[i]) : gen.next();
    if (c.form == nullptr) return fail_with("unreachable form in table");
    const auto bytes = isa::encode_one(c.form->mnemonic, c.operands, c.at);
    const auto d = isa::decode_one(bytes, c.at);
    if (d.length != bytes.size() || d.mnemonic != c.form->mnemonic || d.operands != c.operands ||
        isa::encode_one(d.mnemonic, d.operands, c.at) != bytes) {
      return fail_with("identity broke for " + isa::format_instruction(d));
    }
    covered.insert(c.form);
  }
  std::size_t corpus_insns = 0;
  for (const auto& p : corpus) {
    const auto image = load_image(p.elf);
    for (const auto& insn : decode_regions(p.out.meta.instruction_regions, image)) {
      const auto bytes = image.read(insn.address, insn.length);
      if (isa::encode_one(insn.mnemonic, insn.operands, insn.address) != bytes) {
        return fail_with(p.name + ": re-encode differs at " + hex(insn.address));
      }
      ++corpus_insns;
    }
  }
  return {true, std::to_string(cases) + " random cases over " + std::to_string(covered.size()) + " forms, " +
                    std::to_string(corpus_insns) + " corpus instructions"};
}

}  // namespace

int main() {
  std::vector<Program> corpus;
  try {
    corpus = load_corpus();
  } catch (const std::exception& e) {
    std::cout << "FAIL corpus failed to assemble: " << e.what() << '\n';
    return 1;
  }

  struct Criterion {
    std::string name;
    double budget_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {"corpus roundtrip", 10, [&] { return corpus_roundtrip(corpus); }},
      {"dispatch fixture cfg and label differences", 1, dispatch_cfg},
      {"metadata codec properties", 5, codec_properties},
      {"injection neutrality", 5, [&] { return injection_neutrality(corpus); }},
      {"size overhead", 5, [&] { return size_overhead(corpus); }},
      {"symbolization order commutativity", 5, [&] { return order_commutativity(corpus); }},
      {"straddle hazard detection", 1, straddle_detection},
      {"decoder closure", 10, [&] { return decoder_closure(corpus); }},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto& c = criteria[i];
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = fail_with(std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (o.ok && secs > c.budget_s) o = fail_with(o.detail + "; over time budget");
    failures += !o.ok;
    char timing[32];
    std::snprintf(timing, sizeof timing, "%.3fs", secs);
    std::cout << (o.ok ? "PASS " : "FAIL ") << i + 1 << " " << c.name << ": " << o.detail << " [" << timing << "]\n";
  }
  return failures == 0 ? 0 : 1;
}
