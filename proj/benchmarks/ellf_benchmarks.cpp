#include <benchmark/benchmark.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ellf/asm.hpp"
#include "ellf/lifter.hpp"
#include "ellf/validate.hpp"

namespace {

struct Corpus {
  std::vector<std::string> sources;
  std::vector<ellf::AsmOutput> outputs;
  std::vector<ellf::ElfImage> elves;
};

const Corpus& corpus() {
  static const Corpus c = [] {
    Corpus out;
    std::vector<std::filesystem::path> paths;
    for (const auto& e : std::filesystem::directory_iterator(ELLF_CORPUS_DIR)) paths.push_back(e.path());
    std::sort(paths.begin(), paths.end());
    for (const auto& p : paths) {
      std::ifstream in(p);
      std::stringstream ss;
      ss << in.rdbuf();
      out.sources.push_back(ss.str());
      out.outputs.push_back(ellf::assemble_text(ss.str()));
      out.elves.push_back(ellf::read_elf(out.outputs.back().elf));
    }
    return out;
  }();
  return c;
}

void BM_EncodeMetadata(benchmark::State& state) {
  const auto& c = corpus();
  std::size_t bytes = 0;
  for (auto _ : state) {
    for (const auto& o : c.outputs) {
      auto enc = ellf::encode_metadata(o.meta);
      bytes += enc.size();
      benchmark::DoNotOptimize(enc);
    }
  }
  state.SetBytesProcessed(static_cast<std::int64_t>(bytes));
}
BENCHMARK(BM_EncodeMetadata);

void BM_DecodeMetadata(benchmark::State& state) {
  std::vector<std::vector<std::uint8_t>> encoded;
  for (const auto& o : corpus().outputs) encoded.push_back(ellf::encode_metadata(o.meta));
  std::size_t bytes = 0;
  for (auto _ : state) {
    for (const auto& e : encoded) {
      auto m = ellf::decode_metadata(e);
      bytes += e.size();
      benchmark::DoNotOptimize(m);
    }
  }
  state.SetBytesProcessed(static_cast<std::int64_t>(bytes));
}
BENCHMARK(BM_DecodeMetadata);

void BM_DecodeInstructions(benchmark::State& state) {
  const auto& c = corpus();
  std::vector<ellf::MemoryImage> images;
  for (const auto& e : c.elves) images.push_back(ellf::load_image(e));
  std::int64_t count = 0;
  for (auto _ : state) {
    for (std::size_t i = 0; i < images.size(); ++i) {
      auto insns = ellf::decode_regions(c.outputs[i].meta.instruction_regions, images[i]);
      count += static_cast<std::int64_t>(insns.size());
      benchmark::DoNotOptimize(insns);
    }
  }
  state.SetItemsProcessed(count);
}
BENCHMARK(BM_DecodeInstructions);

void BM_LiftAndEmit(benchmark::State& state) {
  const auto& c = corpus();
  for (auto _ : state) {
    for (std::size_t i = 0; i < c.elves.size(); ++i) {
      auto text = ellf::emit_assembly(ellf::lift(c.elves[i], c.outputs[i].meta, ellf::LiftMode::Strict));
      benchmark::DoNotOptimize(text);
    }
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(c.elves.size()));
}
BENCHMARK(BM_LiftAndEmit);

void BM_Assemble(benchmark::State& state) {
  const auto& c = corpus();
  for (auto _ : state) {
    for (const auto& src : c.sources) {
      auto out = ellf::assemble_text(src);
      benchmark::DoNotOptimize(out);
    }
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(c.sources.size()));
}
BENCHMARK(BM_Assemble);

void BM_Roundtrip(benchmark::State& state) {
  const auto& c = corpus();
  for (auto _ : state) {
    for (const auto& src : c.sources) benchmark::DoNotOptimize(ellf::roundtrip_check(src));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(c.sources.size()));
}
BENCHMARK(BM_Roundtrip);

}  // namespace

BENCHMARK_MAIN();
