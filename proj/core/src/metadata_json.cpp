#include <json.hpp>

#include "ellf/metadata.hpp"

namespace ellf {

using nlohmann::json;

namespace {

std::string addr_str(Address a) { return hex(a); }

Address parse_addr(const json& j, const char* field) {
  if (!j.contains(field)) fail(ErrorKind::BadJson, std::string("missing field \"") + field + "\"");
  const json& v = j.at(field);
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (!v.is_string()) fail(ErrorKind::BadJson, std::string("field \"") + field + "\" must be a hex string");
  const std::string s = v.get<std::string>();
  std::size_t used = 0;
  std::uint64_t value = 0;
  try {
    value = std::stoull(s, &used, 0);
  } catch (const std::exception&) {
    fail(ErrorKind::BadJson, "bad address \"" + s + "\"");
  }
  if (used != s.size()) fail(ErrorKind::BadJson, "bad address \"" + s + "\"");
  return value;
}

std::uint64_t parse_uint(const json& j, const char* field) {
  if (!j.contains(field) || !j.at(field).is_number_unsigned()) {
    fail(ErrorKind::BadJson, std::string("field \"") + field + "\" must be a non-negative integer");
  }
  return j.at(field).get<std::uint64_t>();
}

const json& array_field(const json& j, const char* field) {
  static const json empty = json::array();
  if (!j.contains(field)) return empty;
  if (!j.at(field).is_array()) fail(ErrorKind::BadJson, std::string("field \"") + field + "\" must be an array");
  return j.at(field);
}

TextKind parse_text_kind(const std::string& s) {
  if (s == "basic_block") return TextKind::BasicBlock;
  if (s == "function_start") return TextKind::FunctionStart;
  if (s == "function_end") return TextKind::FunctionEnd;
  fail(ErrorKind::BadJson, "unknown text kind \"" + s + "\"");
}

}  // namespace

std::string metadata_to_json(const EllfMetadata& meta, int indent) {
  json j;
  j["version"] = meta.version;

  j["instruction_regions"] = json::array();
  for (const auto& r : meta.instruction_regions) {
    j["instruction_regions"].push_back({{"start", addr_str(r.start)}, {"count", r.count}});
  }

  j["pointers"] = json::array();
  for (const auto& p : meta.pointers) {
    json e;
    if (const auto* op = std::get_if<OperandPointer>(&p)) {
      e = {{"kind", "operand"}, {"instr_addr", addr_str(op->instr_addr)}, {"operand_index", op->operand_index},
           {"target", addr_str(op->target)}};
    } else if (const auto* dp = std::get_if<DataPointer>(&p)) {
      e = {{"kind", "data"}, {"addr", addr_str(dp->addr)}, {"target", addr_str(dp->target)}};
    } else {
      const auto& d = std::get<DataDiff>(p);
      e = {{"kind", "diff"}, {"addr", addr_str(d.addr)}, {"minuend", addr_str(d.minuend)},
           {"subtrahend", addr_str(d.subtrahend)}, {"width", d.width}};
    }
    j["pointers"].push_back(std::move(e));
  }

  j["text"] = json::array();
  for (const auto& t : meta.text) {
    j["text"].push_back({{"addr", addr_str(t.addr)}, {"kind", std::string(to_string(t.kind))}});
  }

  j["stack"] = json::array();
  for (const auto& s : meta.stack) {
    j["stack"].push_back({{"function_entry", addr_str(s.function_entry)}, {"offsets", s.offsets}});
  }

  j["data"] = json::array();
  for (const auto& d : meta.data) {
    j["data"].push_back({{"addr", addr_str(d.addr)}, {"size", d.size}});
  }
  return j.dump(indent);
}

EllfMetadata metadata_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::BadJson, e.what());
  }
  if (!j.is_object()) fail(ErrorKind::BadJson, "metadata must be a JSON object");

  EllfMetadata meta;
  if (j.contains("version")) {
    const auto v = parse_uint(j, "version");
    if (v != kMetadataVersion) fail(ErrorKind::UnsupportedVersion, "version " + std::to_string(v));
  }

  for (const auto& r : array_field(j, "instruction_regions")) {
    meta.instruction_regions.push_back({parse_addr(r, "start"), parse_uint(r, "count")});
  }

  for (const auto& p : array_field(j, "pointers")) {
    const std::string kind = p.value("kind", "");
    if (kind == "operand") {
      const auto index = parse_uint(p, "operand_index");
      if (index > UINT32_MAX) fail(ErrorKind::BadJson, "operand_index out of range");
      meta.pointers.emplace_back(
          OperandPointer{parse_addr(p, "instr_addr"), static_cast<std::uint32_t>(index), parse_addr(p, "target")});
    } else if (kind == "data") {
      meta.pointers.emplace_back(DataPointer{parse_addr(p, "addr"), parse_addr(p, "target")});
    } else if (kind == "diff") {
      const auto width = p.contains("width") ? parse_uint(p, "width") : 8;
      if (width != 4 && width != 8) fail(ErrorKind::BadJson, "diff width must be 4 or 8");
      meta.pointers.emplace_back(DataDiff{parse_addr(p, "addr"), parse_addr(p, "minuend"), parse_addr(p, "subtrahend"),
                                          static_cast<std::uint8_t>(width)});
    } else {
      fail(ErrorKind::BadJson, "unknown pointer kind \"" + kind + "\"");
    }
  }

  for (const auto& t : array_field(j, "text")) {
    if (!t.contains("kind") || !t.at("kind").is_string()) fail(ErrorKind::BadJson, "text record needs a kind");
    meta.text.push_back({parse_addr(t, "addr"), parse_text_kind(t.at("kind").get<std::string>())});
  }

  for (const auto& s : array_field(j, "stack")) {
    StackRecord rec{parse_addr(s, "function_entry"), {}};
    for (const auto& off : array_field(s, "offsets")) {
      if (!off.is_number_unsigned()) fail(ErrorKind::BadJson, "stack offsets must be non-negative integers");
      rec.offsets.push_back(off.get<std::uint64_t>());
    }
    meta.stack.push_back(std::move(rec));
  }

  for (const auto& d : array_field(j, "data")) {
    meta.data.push_back({parse_addr(d, "addr"), parse_uint(d, "size")});
  }

  check_invariants(meta);
  return meta;
}

}  // namespace ellf
