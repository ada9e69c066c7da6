#include <algorithm>
#include <cctype>
#include <cstdio>
#include <set>

#include "ellf/lifter.hpp"

namespace ellf {

namespace {

std::string upper_hex(Address a) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%llX", static_cast<unsigned long long>(a));
  return buf;
}

std::string anchor_name(const std::string& section) {
  std::string base = section;
  if (!base.empty() && base.front() == '.') base.erase(0, 1);
  for (char& c : base) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '.') c = '_';
  }
  return ".Lsec_" + base;
}

}  // namespace

void LabelMap::add(Address addr, std::string name, LabelKind kind) {
  if (!names_.insert(name).second) fail(ErrorKind::DuplicateLabel, name);
  labels_[addr] = Label{std::move(name), kind};
}

const Label* LabelMap::at(Address addr) const {
  auto it = labels_.find(addr);
  return it == labels_.end() ? nullptr : &it->second;
}

std::optional<std::pair<std::string, std::uint64_t>> LabelMap::lookup(Address addr) const {
  const SectionInfo* sec = nullptr;
  for (const auto& s : sections_) {
    if (addr >= s.vaddr && addr < s.end()) {
      sec = &s;
      break;
    }
  }
  if (sec == nullptr) {
    for (const auto& s : sections_) {
      if (addr == s.end()) {
        sec = &s;
        break;
      }
    }
  }
  if (sec == nullptr) return std::nullopt;

  auto it = labels_.upper_bound(addr);
  if (it == labels_.begin()) return std::nullopt;
  --it;
  if (it->first < sec->vaddr) return std::nullopt;
  return std::make_pair(it->second.name, addr - it->first);
}

LabelMap generate_labels(const EllfMetadata& meta, const std::vector<SectionInfo>& sections,
                         const std::set<Address>& extra_blocks) {
  LabelMap labels(sections);
  std::set<Address> taken;

  std::vector<Address> functions;
  for (const auto& t : meta.text) {
    if (t.kind != TextKind::FunctionStart) continue;
    labels.add(t.addr, "F_" + upper_hex(t.addr), LabelKind::Function);
    functions.push_back(t.addr);
    taken.insert(t.addr);
  }

  std::set<Address> blocks = extra_blocks;
  for (const auto& t : meta.text) {
    if (t.kind == TextKind::BasicBlock) blocks.insert(t.addr);
  }
  std::map<Address, unsigned> block_counter;
  for (const Address b : blocks) {
    if (taken.count(b)) continue;
    auto owner = std::upper_bound(functions.begin(), functions.end(), b);
    std::string name;
    if (owner == functions.begin()) {
      name = ".L_" + upper_hex(b);
    } else {
      const Address fn = *std::prev(owner);
      name = ".L" + upper_hex(fn) + "_" + std::to_string(++block_counter[fn]);
    }
    labels.add(b, std::move(name), LabelKind::Block);
    taken.insert(b);
  }

  for (const auto& d : meta.data) {
    if (taken.count(d.addr)) continue;
    labels.add(d.addr, "D_" + upper_hex(d.addr), LabelKind::Data);
    taken.insert(d.addr);
  }

  for (const auto& s : sections) {
    if (taken.count(s.vaddr)) continue;
    labels.add(s.vaddr, anchor_name(s.name), LabelKind::Anchor);
    taken.insert(s.vaddr);
  }

  for (const auto& st : meta.stack) {
    auto& slots = labels.slots[st.function_entry];
    for (auto off : st.offsets) slots.push_back({"s" + std::to_string(off), off});
  }
  return labels;
}

}  // namespace ellf
