#include <cctype>
#include <charconv>
#include <set>
#include <sstream>

#include "ellf/asm.hpp"

namespace ellf {

namespace {

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '$'; }
bool ident_char(char c) { return ident_start(c) || std::isdigit(static_cast<unsigned char>(c)); }

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool is_branch(std::string_view m) { return m == "call" || (!m.empty() && m[0] == 'j'); }

class LineParser {
 public:
  LineParser(std::string_view text, int line) : s_(text), line_(line) {}

  [[noreturn]] void error(const std::string& msg) const {
    fail(ErrorKind::SyntaxError, "line " + std::to_string(line_) + ": " + msg);
  }

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  bool at_end() {
    skip_ws();
    return pos_ >= s_.size();
  }
  bool peek(char c) {
    skip_ws();
    return pos_ < s_.size() && s_[pos_] == c;
  }
  bool accept(char c) {
    if (!peek(c)) return false;
    ++pos_;
    return true;
  }
  void expect(char c) {
    if (!accept(c)) error(std::string("expected '") + c + "'");
  }
  void expect_end() {
    if (!at_end()) error("unexpected text '" + std::string(s_.substr(pos_)) + "'");
  }

  bool peek_ident() {
    skip_ws();
    return pos_ < s_.size() && ident_start(s_[pos_]);
  }
  std::string ident() {
    skip_ws();
    if (pos_ >= s_.size() || !ident_start(s_[pos_])) error("expected a name");
    const std::size_t start = pos_;
    while (pos_ < s_.size() && ident_char(s_[pos_])) ++pos_;
    return std::string(s_.substr(start, pos_ - start));
  }

  bool peek_number() {
    skip_ws();
    if (pos_ >= s_.size()) return false;
    const char c = s_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c))) return true;
    return c == '-' && pos_ + 1 < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_ + 1]));
  }

  std::int64_t number() {
    skip_ws();
    bool negative = false;
    if (pos_ < s_.size() && s_[pos_] == '-') {
      negative = true;
      ++pos_;
    }
    int base = 10;
    if (pos_ + 1 < s_.size() && s_[pos_] == '0' && (s_[pos_ + 1] == 'x' || s_[pos_ + 1] == 'X')) {
      base = 16;
      pos_ += 2;
    }
    std::uint64_t v = 0;
    const char* begin = s_.data() + pos_;
    const auto [end, ec] = std::from_chars(begin, s_.data() + s_.size(), v, base);
    if (ec != std::errc() || end == begin) error("bad number");
    pos_ += static_cast<std::size_t>(end - begin);
    if (pos_ < s_.size() && ident_char(s_[pos_])) error("bad number");
    return negative ? static_cast<std::int64_t>(0 - v) : static_cast<std::int64_t>(v);
  }

  std::uint64_t unsigned_number() {
    const auto v = number();
    if (v < 0) error("expected a non-negative number");
    return static_cast<std::uint64_t>(v);
  }

  // LABEL, LABEL+N or LABEL-N.
  std::pair<std::string, std::int64_t> label_offset() {
    std::string name = ident();
    std::int64_t off = 0;
    if (accept('+')) {
      off = number();
    } else if (peek('-') && !following_label_after_minus()) {
      ++pos_;
      off = -number();
    }
    return {std::move(name), off};
  }

  std::string quoted() {
    skip_ws();
    if (pos_ >= s_.size() || s_[pos_] != '"') error("expected a string");
    ++pos_;
    std::string out;
    while (true) {
      if (pos_ >= s_.size()) error("unterminated string");
      const char c = s_[pos_++];
      if (c == '"') break;
      if (c != '\\') {
        out += c;
        continue;
      }
      if (pos_ >= s_.size()) error("unterminated string");
      const char e = s_[pos_++];
      switch (e) {
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case '0': out += '\0'; break;
        case '\\': out += '\\'; break;
        case '"': out += '"'; break;
        default: error(std::string("unknown escape \\") + e);
      }
    }
    return out;
  }

  std::string_view rest() {
    skip_ws();
    return s_.substr(pos_);
  }
  std::size_t pos() const { return pos_; }
  void set_pos(std::size_t p) { pos_ = p; }

 private:
  // After "LABEL", a '-' followed by a name or '(' starts a subtrahend.
  bool following_label_after_minus() {
    std::size_t p = pos_ + 1;
    while (p < s_.size() && std::isspace(static_cast<unsigned char>(s_[p]))) ++p;
    return p < s_.size() && (ident_start(s_[p]) || s_[p] == '(');
  }

  std::string_view s_;
  std::size_t pos_ = 0;
  int line_;
};

std::vector<std::string_view> split_operands(std::string_view s) {
  std::vector<std::string_view> out;
  int depth = 0;
  std::size_t start = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '[' || s[i] == '(') ++depth;
    if (s[i] == ']' || s[i] == ')') --depth;
    if (s[i] == ',' && depth == 0) {
      out.push_back(trim(s.substr(start, i - start)));
      start = i + 1;
    }
  }
  out.push_back(trim(s.substr(start)));
  return out;
}

isa::MemRef parse_memory(LineParser& p) {
  isa::MemRef m;
  p.expect('[');
  bool first = true;
  while (!p.accept(']')) {
    int sign = 1;
    if (!first) {
      if (p.accept('+')) {
        sign = 1;
      } else if (p.accept('-')) {
        sign = -1;
      } else {
        p.error("expected '+', '-' or ']' in memory operand");
      }
    }
    first = false;

    if (p.peek_number()) {
      m.displacement += sign * p.number();
      continue;
    }
    const std::string name = p.ident();
    if (name == "rip") {
      if (sign < 0 || m.rip_relative) p.error("bad use of rip");
      m.rip_relative = true;
      continue;
    }
    if (const auto reg = isa::parse_reg(name)) {
      if (sign < 0) p.error("registers cannot be subtracted");
      std::uint8_t scale = 1;
      const bool scaled = p.accept('*');
      if (scaled) {
        const auto s = p.number();
        if (s != 1 && s != 2 && s != 4 && s != 8) p.error("scale must be 1, 2, 4 or 8");
        scale = static_cast<std::uint8_t>(s);
      }
      if (!m.base && !scaled) {
        m.base = *reg;
      } else if (!m.index) {
        m.index = *reg;
        m.scale = scale;
      } else {
        p.error("too many registers in memory operand");
      }
      continue;
    }
    if (sign < 0 || !m.symbol.empty()) p.error("only one symbol may be added in a memory operand");
    m.symbol = name;
  }
  if (!m.symbol.empty() && !m.base && !m.index) m.rip_relative = true;
  if (m.rip_relative && (m.base || m.index)) p.error("rip-relative operands take no other registers");
  return m;
}

isa::Operand parse_operand(std::string_view text, std::string_view mnemonic, int line) {
  LineParser p(text, line);
  std::uint8_t width = 0;
  if (p.peek_ident()) {
    const std::size_t save = p.pos();
    const std::string word = p.ident();
    if (word == "qword" || word == "dword") {
      width = word == "qword" ? 64 : 32;
      if (p.peek_ident()) {
        const std::size_t save_ptr = p.pos();
        if (p.ident() != "ptr") p.set_pos(save_ptr);
      }
      if (!p.peek('[')) p.error("size prefix without memory operand");
    } else {
      p.set_pos(save);
    }
  }

  isa::Operand op;
  if (p.peek('[')) {
    auto m = parse_memory(p);
    m.width = width;
    op = std::move(m);
  } else if (p.peek_number()) {
    const auto v = p.number();
    if (is_branch(mnemonic)) {
      op = isa::PcRel{static_cast<Address>(v)};
    } else {
      op = isa::Immediate{v};
    }
  } else {
    const std::size_t save = p.pos();
    const std::string name = p.ident();
    if (const auto reg = isa::parse_reg(name)) {
      op = isa::Register{*reg};
    } else {
      p.set_pos(save);
      auto [label, off] = p.label_offset();
      op = isa::SymbolRef{std::move(label), off};
    }
  }
  p.expect_end();
  return op;
}

DataValue parse_value(LineParser& p, std::uint8_t width) {
  DataValue v;
  v.width = width;
  if (p.peek_number()) {
    v.number = p.number();
    return v;
  }
  std::tie(v.label, v.offset) = p.label_offset();
  if (p.accept('-')) {
    if (p.accept('(')) {
      std::tie(v.subtrahend, v.subtrahend_offset) = p.label_offset();
      p.expect(')');
    } else {
      v.subtrahend = p.ident();
    }
  }
  return v;
}

class ProgramParser {
 public:
  AsmProgram run(const std::string& text) {
    std::istringstream in(text);
    std::string raw;
    while (std::getline(in, raw)) {
      ++line_;
      parse_line(strip_comment(raw));
    }
    return std::move(prog_);
  }

 private:
  static std::string_view strip_comment(std::string_view s) {
    bool in_string = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] == '"' && (i == 0 || s[i - 1] != '\\')) in_string = !in_string;
      if (s[i] == '#' && !in_string) return s.substr(0, i);
    }
    return s;
  }

  [[noreturn]] void error(ErrorKind kind, const std::string& msg) const {
    fail(kind, "line " + std::to_string(line_) + ": " + msg);
  }

  AsmSection& section() {
    if (!current_) error(ErrorKind::SyntaxError, "statement outside any .section");
    return prog_.sections[*current_];
  }

  void add(AsmNode node) { section().items.push_back(AsmItem{line_, std::move(node)}); }

  void define(const std::string& name) {
    if (!names_.insert(name).second) error(ErrorKind::DuplicateLabel, "label " + name + " is already defined");
  }

  void parse_line(std::string_view line) {
    LineParser p(line, line_);
    // Leading "name:" labels.
    while (p.peek_ident()) {
      const std::size_t save = p.pos();
      const std::string name = p.ident();
      if (!p.accept(':')) {
        p.set_pos(save);
        break;
      }
      define(name);
      add(LabelDef{name});
    }
    if (p.at_end()) return;

    const std::string word = p.ident();
    if (word[0] == '.') {
      directive(word, p);
    } else {
      instruction(word, p);
    }
  }

  void instruction(const std::string& word, LineParser& p) {
    if (!isa::is_mnemonic(word)) error(ErrorKind::SyntaxError, "unknown mnemonic " + word);
    Instr ins;
    ins.mnemonic = std::string(isa::canonical_mnemonic(word));
    const auto rest = p.rest();
    if (!rest.empty()) {
      for (auto text : split_operands(rest)) {
        if (text.empty()) error(ErrorKind::SyntaxError, "empty operand");
        ins.operands.push_back(parse_operand(text, ins.mnemonic, line_));
      }
    }
    add(std::move(ins));
  }

  void directive(const std::string& d, LineParser& p) {
    if (d == ".section") {
      const std::string name = p.ident();
      std::optional<Address> base;
      if (!p.at_end()) {
        if (p.ident() != "base") p.error("expected base=ADDRESS");
        p.expect('=');
        base = p.unsigned_number();
      }
      p.expect_end();
      current_.reset();
      for (std::size_t i = 0; i < prog_.sections.size(); ++i) {
        if (prog_.sections[i].name == name) current_ = i;
      }
      if (!current_) {
        prog_.sections.push_back(AsmSection{name, base, {}});
        current_ = prog_.sections.size() - 1;
        return;
      }
      auto& sec = prog_.sections[*current_];
      if (base && sec.base && *base != *sec.base) p.error("section " + name + " reopened with a different base");
      if (base) sec.base = base;
    } else if (d == ".func") {
      const std::string name = p.ident();
      p.expect_end();
      define(name);
      add(FuncBegin{name});
    } else if (d == ".endfunc" || d == ".fend") {
      p.expect_end();
      add(FuncEnd{d == ".endfunc"});
    } else if (d == ".byte") {
      DataBytes b;
      do {
        const auto v = p.number();
        if (v < -128 || v > 255) p.error(".byte value out of range");
        b.bytes.push_back(static_cast<std::uint8_t>(v));
      } while (p.accept(','));
      p.expect_end();
      add(std::move(b));
    } else if (d == ".long" || d == ".quad") {
      const std::uint8_t width = d == ".long" ? 4 : 8;
      do {
        auto v = parse_value(p, width);
        if (v.is_pointer() && width != 8) p.error("absolute pointers must be 8 bytes");
        add(std::move(v));
      } while (p.accept(','));
      p.expect_end();
    } else if (d == ".zero") {
      const auto n = p.unsigned_number();
      p.expect_end();
      add(DataZero{n});
    } else if (d == ".asciz" || d == ".ascii") {
      const std::string s = p.quoted();
      p.expect_end();
      DataBytes b{std::vector<std::uint8_t>(s.begin(), s.end())};
      if (d == ".asciz") b.bytes.push_back(0);
      add(std::move(b));
    } else if (d == ".size") {
      SizeDef s;
      s.label = p.ident();
      p.expect(',');
      s.size = p.unsigned_number();
      p.expect_end();
      add(std::move(s));
    } else if (d == ".set") {
      SetDef s;
      s.name = p.ident();
      p.expect(',');
      std::tie(s.label, s.offset) = p.label_offset();
      p.expect_end();
      define(s.name);
      add(std::move(s));
    } else if (d == ".slot") {
      SlotDef s;
      s.function = p.ident();
      p.expect(',');
      s.name = p.ident();
      p.expect(',');
      s.offset = p.unsigned_number();
      p.expect_end();
      if (!slots_.insert({s.function, s.name}).second) {
        error(ErrorKind::DuplicateLabel, "slot " + s.name + " of " + s.function + " is already defined");
      }
      add(std::move(s));
    } else {
      error(ErrorKind::UnknownDirective, "unknown directive " + d);
    }
  }

  AsmProgram prog_;
  std::optional<std::size_t> current_;
  int line_ = 0;
  std::set<std::string> names_;
  std::set<std::pair<std::string, std::string>> slots_;
};

}  // namespace

AsmProgram parse_assembly(const std::string& text) { return ProgramParser().run(text); }

}  // namespace ellf
