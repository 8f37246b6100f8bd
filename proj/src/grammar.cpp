#include "crane/grammar.hpp"

#include <algorithm>
#include <cctype>
#include <functional>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace crane {

GrammarError::GrammarError(const std::string& what, int line, int column)
    : std::runtime_error("line " + std::to_string(line) + ", column " + std::to_string(column) +
                         ": " + what),
      line_(line),
      column_(column) {}

namespace {

std::string quote(std::string_view text) {
  std::string out = "\"";
  for (char c : text) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default: out += c;
    }
  }
  out += '"';
  return out;
}

std::shared_ptr<const regex::Dfa> compile_pattern(const std::string& name,
                                                  const std::string& pattern) {
  try {
    auto dfa = std::make_shared<const regex::Dfa>(regex::compile(pattern));
    if (dfa->matches_empty()) throw GrammarError("terminal " + name + " matches the empty string");
    if (dfa->empty_language()) throw GrammarError("terminal " + name + " matches nothing");
    return dfa;
  } catch (const regex::RegexError& e) {
    throw GrammarError("terminal " + name + ": " + e.what());
  }
}

}  // namespace

std::string literal_terminal_name(std::string_view text) { return quote(text); }

// ---------------------------------------------------------------------------
// GrammarSpec

const TerminalDef& GrammarSpec::terminal(std::string_view name) const {
  auto it = terminals_.find(std::string(name));
  if (it == terminals_.end()) throw GrammarError("unknown terminal " + std::string(name));
  return it->second;
}

bool GrammarSpec::has_terminal(std::string_view name) const {
  return terminals_.count(std::string(name)) != 0;
}

std::vector<const Production*> GrammarSpec::productions_of(std::string_view lhs) const {
  std::vector<const Production*> out;
  for (const auto& p : productions_) {
    if (p.lhs == lhs) out.push_back(&p);
  }
  return out;
}

void GrammarSpec::add_production(Production p) {
  nonterminals_.insert(p.lhs);
  productions_.push_back(std::move(p));
}

void GrammarSpec::add_terminal(TerminalDef def) {
  if (def.order < 0) def.order = next_order_;
  next_order_ = std::max(next_order_, def.order + 1);
  if (!def.dfa) def.dfa = compile_pattern(def.name, def.pattern);
  std::string name = def.name;
  terminals_.insert_or_assign(std::move(name), std::move(def));
}

void GrammarSpec::replace_terminal(TerminalDef def) {
  if (!def.dfa) def.dfa = compile_pattern(def.name, def.pattern);
  std::string name = def.name;
  terminals_.insert_or_assign(std::move(name), std::move(def));
}

std::string GrammarSpec::literal_terminal(std::string_view text) {
  std::string name = literal_terminal_name(text);
  if (!terminals_.count(name)) {
    if (text.empty()) throw GrammarError("empty string literal");
    TerminalDef def;
    def.name = name;
    def.pattern = regex::escape(text);
    def.literal = std::string(text);
    def.order = -1;
    add_terminal(std::move(def));
  }
  return name;
}

std::string GrammarSpec::fresh_name(std::string_view stem) const {
  for (int i = 0;; ++i) {
    std::string candidate = std::string(stem) + "_" + std::to_string(i);
    if (!nonterminals_.count(candidate) && !terminals_.count(candidate)) return candidate;
  }
}

void GrammarSpec::validate() const {
  if (start_.empty() || !nonterminals_.count(start_)) {
    throw GrammarError("start rule '" + start_ + "' has no productions");
  }
  std::set<std::string> with_productions;
  for (const auto& p : productions_) with_productions.insert(p.lhs);
  for (const auto& p : productions_) {
    if (p.rhs.empty() && !p.epsilon_from_desugar) {
      throw GrammarError("unflagged empty production for '" + p.lhs + "'");
    }
    for (const auto& s : p.rhs) {
      if (s.is_terminal()) {
        if (!terminals_.count(s.name)) throw GrammarError("undefined terminal " + s.name);
      } else if (!with_productions.count(s.name)) {
        throw GrammarError("undefined rule " + s.name);
      }
    }
  }
  for (const auto& name : ignored_) {
    if (!terminals_.count(name)) throw GrammarError("ignored terminal " + name + " is undefined");
  }
  for (const auto& [name, def] : terminals_) {
    if (!def.dfa) throw GrammarError("terminal " + name + " is not compiled");
  }
}

// ---------------------------------------------------------------------------
// Source parser

namespace {

enum class Tok {
  kName,
  kColon,
  kPipe,
  kLParen,
  kRParen,
  kOp,
  kString,
  kRegex,
  kArrow,
  kDot,
  kNumber,
  kDirective,
  kNewline,
  kEnd,
};

struct Token {
  Tok kind;
  std::string text;
  int line;
  int column;
};

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    while (true) {
      skip_blanks();
      if (pos_ >= src_.size()) break;
      int line = line_;
      int col = column();
      char c = src_[pos_];
      if (c == '\n') {
        advance();
        out.push_back({Tok::kNewline, "\n", line, col});
      } else if (c == '/' && next_is('/')) {
        while (pos_ < src_.size() && src_[pos_] != '\n') advance();
      } else if (c == '/') {
        out.push_back({Tok::kRegex, read_regex(), line, col});
      } else if (c == '"') {
        out.push_back({Tok::kString, read_string(), line, col});
      } else if (c == '-' && next_is('>')) {
        advance(), advance();
        out.push_back({Tok::kArrow, "->", line, col});
      } else if (c == '-' || std::isdigit(static_cast<unsigned char>(c))) {
        std::string num(1, c);
        advance();
        while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
          num += src_[pos_];
          advance();
        }
        if (num == "-") fail("unexpected '-'", line, col);
        out.push_back({Tok::kNumber, num, line, col});
      } else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        std::string name;
        while (pos_ < src_.size() &&
               (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) {
          name += src_[pos_];
          advance();
        }
        out.push_back({Tok::kName, name, line, col});
      } else if (c == '%') {
        std::string name = "%";
        advance();
        while (pos_ < src_.size() && std::isalpha(static_cast<unsigned char>(src_[pos_]))) {
          name += src_[pos_];
          advance();
        }
        out.push_back({Tok::kDirective, name, line, col});
      } else {
        advance();
        switch (c) {
          case ':': out.push_back({Tok::kColon, ":", line, col}); break;
          case '|': out.push_back({Tok::kPipe, "|", line, col}); break;
          case '(': out.push_back({Tok::kLParen, "(", line, col}); break;
          case ')': out.push_back({Tok::kRParen, ")", line, col}); break;
          case '.': out.push_back({Tok::kDot, ".", line, col}); break;
          case '?':
          case '*':
          case '+': out.push_back({Tok::kOp, std::string(1, c), line, col}); break;
          default: fail(std::string("unexpected character '") + c + "'", line, col);
        }
      }
    }
    out.push_back({Tok::kEnd, "", line_, column()});
    return out;
  }

 private:
  [[noreturn]] static void fail(const std::string& what, int line, int col) {
    throw GrammarError(what, line, col);
  }

  int column() const { return static_cast<int>(pos_ - line_start_) + 1; }
  bool next_is(char c) const { return pos_ + 1 < src_.size() && src_[pos_ + 1] == c; }

  void advance() {
    if (src_[pos_] == '\n') {
      ++line_;
      line_start_ = pos_ + 1;
    }
    ++pos_;
  }

  void skip_blanks() {
    while (pos_ < src_.size() && (src_[pos_] == ' ' || src_[pos_] == '\t' || src_[pos_] == '\r')) {
      advance();
    }
  }

  std::string read_string() {
    int line = line_;
    int col = column();
    advance();  // opening quote
    std::string out;
    while (true) {
      if (pos_ >= src_.size() || src_[pos_] == '\n') fail("unterminated string literal", line, col);
      char c = src_[pos_];
      advance();
      if (c == '"') break;
      if (c == '\\') {
        if (pos_ >= src_.size()) fail("unterminated string literal", line, col);
        char e = src_[pos_];
        advance();
        switch (e) {
          case 'n': out += '\n'; break;
          case 't': out += '\t'; break;
          case 'r': out += '\r'; break;
          case '\\': out += '\\'; break;
          case '"': out += '"'; break;
          default:
            out += '\\';
            out += e;
        }
      } else {
        out += c;
      }
    }
    return out;
  }

  std::string read_regex() {
    int line = line_;
    int col = column();
    advance();  // opening slash
    std::string out;
    bool in_class = false;
    while (true) {
      if (pos_ >= src_.size() || src_[pos_] == '\n') fail("unterminated regular expression", line, col);
      char c = src_[pos_];
      advance();
      if (c == '\\') {
        if (pos_ >= src_.size()) fail("unterminated regular expression", line, col);
        out += c;
        out += src_[pos_];
        advance();
        continue;
      }
      if (c == '[') in_class = true;
      if (c == ']') in_class = false;
      if (c == '/' && !in_class) break;
      out += c;
    }
    if (pos_ < src_.size() && std::isalpha(static_cast<unsigned char>(src_[pos_]))) {
      fail("regular expression flags are not supported", line_, column());
    }
    return out;
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  int line_ = 1;
  std::size_t line_start_ = 0;
};

// Syntax tree of a definition body.
struct Item {
  enum class Kind { kName, kString, kRegex, kGroup };
  Kind kind = Kind::kName;
  std::string text;
  char op = 0;  // 0, '?', '*', '+'
  struct Alternative {
    std::vector<Item> items;
    std::string alias;
  };
  std::vector<Alternative> group;
  int line = 0;
  int column = 0;
};

using Alternatives = std::vector<Item::Alternative>;

struct Definition {
  std::string name;
  bool is_terminal = false;
  int priority = 0;
  Alternatives body;
  int line = 0;
  int column = 0;
};

bool is_terminal_name(std::string_view name) {
  // Terminals are spelled in upper case: the first letter decides.
  for (char c : name) {
    if (std::isalpha(static_cast<unsigned char>(c))) return std::isupper(static_cast<unsigned char>(c));
  }
  return false;
}

class SourceParser {
 public:
  explicit SourceParser(std::vector<Token> toks) : toks_(std::move(toks)) {}

  void run(std::vector<Definition>& defs, std::vector<Token>& ignores) {
    while (true) {
      skip_newlines();
      if (peek().kind == Tok::kEnd) break;
      if (peek().kind == Tok::kDirective) {
        Token d = take();
        if (d.text != "%ignore") fail("unsupported directive " + d.text, d);
        Token target = take();
        if (target.kind != Tok::kName && target.kind != Tok::kString) {
          fail("expected a terminal after %ignore", target);
        }
        ignores.push_back(target);
        expect_line_end();
        continue;
      }
      defs.push_back(definition());
    }
  }

 private:
  [[noreturn]] static void fail(const std::string& what, const Token& at) {
    throw GrammarError(what, at.line, at.column);
  }

  const Token& peek(std::size_t ahead = 0) const {
    return toks_[std::min(pos_ + ahead, toks_.size() - 1)];
  }
  Token take() { return toks_[std::min(pos_++, toks_.size() - 1)]; }

  void skip_newlines() {
    while (peek().kind == Tok::kNewline) ++pos_;
  }

  void expect_line_end() {
    if (peek().kind != Tok::kNewline && peek().kind != Tok::kEnd) fail("expected end of line", peek());
  }

  // A newline continues the current definition only when the next line
  // starts with '|'.
  bool continues_with_pipe() {
    std::size_t p = pos_;
    while (toks_[p].kind == Tok::kNewline) ++p;
    if (toks_[p].kind == Tok::kPipe) {
      pos_ = p;
      return true;
    }
    return false;
  }

  Definition definition() {
    Definition def;
    Token first = peek();
    def.line = first.line;
    def.column = first.column;
    if (first.kind == Tok::kOp && first.text == "?") {
      ++pos_;  // inline marker; no effect on the language
      if (peek().kind != Tok::kName) fail("expected rule name after '?'", peek());
    }
    Token name = take();
    if (name.kind != Tok::kName) fail("expected a rule or terminal name", name);
    def.name = name.text;
    def.is_terminal = is_terminal_name(name.text);
    if (first.kind == Tok::kOp && def.is_terminal) fail("'?' prefix is only valid on rules", first);
    if (peek().kind == Tok::kDot) {
      Token dot = take();
      Token num = take();
      if (num.kind != Tok::kNumber) fail("expected priority after '.'", num);
      if (!def.is_terminal) fail("priorities are only supported on terminals", dot);
      def.priority = std::stoi(num.text);
    }
    Token colon = take();
    if (colon.kind != Tok::kColon) fail("expected ':'", colon);
    def.body = alternatives(/*top_level=*/true);
    expect_line_end();
    return def;
  }

  Alternatives alternatives(bool top_level) {
    Alternatives alts;
    while (true) {
      Item::Alternative alt;
      while (true) {
        const Token& t = peek();
        if (t.kind == Tok::kName || t.kind == Tok::kString || t.kind == Tok::kRegex ||
            t.kind == Tok::kLParen) {
          alt.items.push_back(item());
        } else {
          break;
        }
      }
      if (alt.items.empty()) fail("empty alternative", peek());
      if (peek().kind == Tok::kArrow) {
        Token arrow = take();
        if (!top_level) fail("aliases are only allowed on top-level alternatives", arrow);
        Token alias = take();
        if (alias.kind != Tok::kName) fail("expected alias name after '->'", alias);
        alt.alias = alias.text;
      }
      alts.push_back(std::move(alt));
      if (peek().kind == Tok::kPipe) {
        ++pos_;
        continue;
      }
      if (top_level && peek().kind == Tok::kNewline && continues_with_pipe()) {
        ++pos_;
        continue;
      }
      break;
    }
    return alts;
  }

  Item item() {
    Token t = take();
    Item it;
    it.line = t.line;
    it.column = t.column;
    switch (t.kind) {
      case Tok::kName: it.kind = Item::Kind::kName; it.text = t.text; break;
      case Tok::kString:
        it.kind = Item::Kind::kString;
        it.text = t.text;
        if (it.text.empty()) fail("empty string literal", t);
        break;
      case Tok::kRegex: it.kind = Item::Kind::kRegex; it.text = t.text; break;
      case Tok::kLParen: {
        it.kind = Item::Kind::kGroup;
        it.group = alternatives(/*top_level=*/false);
        Token close = take();
        if (close.kind != Tok::kRParen) fail("expected ')'", close);
        break;
      }
      default: fail("unexpected token", t);
    }
    if (peek().kind == Tok::kOp) it.op = take().text[0];
    return it;
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
};

class Lowering {
 public:
  Lowering(GrammarSpec& g, const std::vector<Definition>& defs) : g_(g), defs_(defs) {
    for (const auto& d : defs_) {
      auto& table = d.is_terminal ? terminal_defs_ : rule_defs_;
      if (!table.emplace(d.name, &d).second) {
        throw GrammarError("duplicate definition of '" + d.name + "'", d.line, d.column);
      }
    }
  }

  void run(const std::vector<Token>& ignores) {
    // Named terminals first, in declaration order, so that their order
    // reflects the source.
    for (const auto& d : defs_) {
      if (d.is_terminal) named_terminal(d.name, d.line, d.column);
    }
    for (const auto& d : defs_) {
      if (d.is_terminal) continue;
      for (const auto& alt : d.body) {
        Production p;
        p.lhs = d.name;
        p.rhs = sequence(d.name, alt.items);
        p.alias = alt.alias;
        pending_.push_back(std::move(p));
      }
    }
    for (auto& p : pending_) g_.add_production(std::move(p));
    for (const auto& t : ignores) {
      if (t.kind == Tok::kString) {
        g_.add_ignored(g_.literal_terminal(t.text));
      } else {
        if (!terminal_defs_.count(t.text)) {
          throw GrammarError("undefined terminal " + t.text, t.line, t.column);
        }
        g_.add_ignored(t.text);
      }
    }
    if (!rule_defs_.count("start")) throw GrammarError("grammar has no 'start' rule");
    g_.set_start("start");
  }

 private:
  std::string fresh(const std::string& stem) {
    for (int i = counter_++;; i = counter_++) {
      std::string name = "__" + stem + "_" + std::to_string(i);
      if (!rule_defs_.count(name) && !terminal_defs_.count(name)) return name;
    }
  }

  // Returns the terminal name, defining it on first use.
  const std::string& named_terminal(const std::string& name, int line, int column) {
    if (auto it = terminal_patterns_.find(name); it != terminal_patterns_.end()) return it->first;
    auto def_it = terminal_defs_.find(name);
    if (def_it == terminal_defs_.end()) {
      throw GrammarError("undefined terminal " + name, line, column);
    }
    if (!in_progress_.insert(name).second) {
      throw GrammarError("terminal " + name + " is defined recursively", line, column);
    }
    const Definition& d = *def_it->second;
    TerminalDef def;
    def.name = name;
    def.priority = d.priority;
    def.pattern = pattern_of(d.body);
    if (d.body.size() == 1 && d.body[0].items.size() == 1 &&
        d.body[0].items[0].kind == Item::Kind::kString && d.body[0].items[0].op == 0) {
      def.literal = d.body[0].items[0].text;
    }
    def.order = -1;
    try {
      g_.add_terminal(def);
    } catch (const GrammarError& e) {
      throw GrammarError(e.what(), d.line, d.column);
    }
    in_progress_.erase(name);
    return terminal_patterns_.emplace(name, def.pattern).first->first;
  }

  std::string pattern_of(const Alternatives& alts) {
    std::string out;
    for (std::size_t i = 0; i < alts.size(); ++i) {
      if (i) out += '|';
      for (const auto& it : alts[i].items) {
        std::string piece;
        switch (it.kind) {
          case Item::Kind::kString: piece = regex::escape(it.text); break;
          case Item::Kind::kRegex: piece = it.text; break;
          case Item::Kind::kName:
            if (!is_terminal_name(it.text)) {
              throw GrammarError("rule '" + it.text + "' referenced inside a terminal", it.line,
                                 it.column);
            }
            named_terminal(it.text, it.line, it.column);
            piece = terminal_patterns_.at(it.text);
            break;
          case Item::Kind::kGroup: piece = pattern_of(it.group); break;
        }
        if (alts[i].items.size() == 1 && !it.op) {
          out += piece;
        } else {
          out += "(?:" + piece + ")";
          if (it.op) out += it.op;
        }
      }
    }
    return alts.size() > 1 ? "(?:" + out + ")" : out;
  }

  std::vector<SymbolRef> base_symbols(const std::string& owner, const Item& it) {
    switch (it.kind) {
      case Item::Kind::kString:
        try {
          return {SymbolRef::terminal(g_.literal_terminal(it.text))};
        } catch (const GrammarError& e) {
          throw GrammarError(e.what(), it.line, it.column);
        }
      case Item::Kind::kRegex: {
        std::string name = "/" + it.text + "/";
        if (!g_.has_terminal(name)) {
          TerminalDef def;
          def.name = name;
          def.pattern = it.text;
          def.order = -1;
          try {
            g_.add_terminal(std::move(def));
          } catch (const GrammarError& e) {
            throw GrammarError(e.what(), it.line, it.column);
          }
        }
        return {SymbolRef::terminal(name)};
      }
      case Item::Kind::kName:
        if (is_terminal_name(it.text)) {
          return {SymbolRef::terminal(named_terminal(it.text, it.line, it.column))};
        }
        if (!rule_defs_.count(it.text)) {
          throw GrammarError("undefined rule " + it.text, it.line, it.column);
        }
        return {SymbolRef::nonterminal(it.text)};
      case Item::Kind::kGroup: {
        if (it.group.size() == 1) return sequence(owner, it.group[0].items);
        std::string name = fresh(owner + "_group");
        for (const auto& alt : it.group) {
          Production p;
          p.lhs = name;
          p.rhs = sequence(owner, alt.items);
          pending_.push_back(std::move(p));
        }
        return {SymbolRef::nonterminal(name)};
      }
    }
    return {};
  }

  std::vector<SymbolRef> sequence(const std::string& owner, const std::vector<Item>& items) {
    std::vector<SymbolRef> out;
    for (const auto& it : items) {
      std::vector<SymbolRef> body = base_symbols(owner, it);
      if (it.op == 0) {
        out.insert(out.end(), body.begin(), body.end());
        continue;
      }
      const char* stem = it.op == '?' ? "_opt" : it.op == '*' ? "_star" : "_plus";
      std::string name = fresh(owner + stem);
      Production once{name, body, "", false};
      Production more{name, {SymbolRef::nonterminal(name)}, "", false};
      more.rhs.insert(more.rhs.end(), body.begin(), body.end());
      Production none{name, {}, "", true};
      switch (it.op) {
        case '?':
          pending_.push_back(std::move(once));
          pending_.push_back(std::move(none));
          break;
        case '*':
          pending_.push_back(std::move(none));
          pending_.push_back(std::move(more));
          break;
        default:
          pending_.push_back(std::move(once));
          pending_.push_back(std::move(more));
      }
      out.push_back(SymbolRef::nonterminal(name));
    }
    return out;
  }

  GrammarSpec& g_;
  const std::vector<Definition>& defs_;
  std::unordered_map<std::string, const Definition*> rule_defs_;
  std::unordered_map<std::string, const Definition*> terminal_defs_;
  std::map<std::string, std::string> terminal_patterns_;
  std::set<std::string> in_progress_;
  std::vector<Production> pending_;
  int counter_ = 0;
};

}  // namespace

GrammarSpec parse_grammar_text(std::string_view text) {
  std::vector<Definition> defs;
  std::vector<Token> ignores;
  SourceParser(Lexer(text).run()).run(defs, ignores);
  GrammarSpec g;
  Lowering(g, defs).run(ignores);
  g.validate();
  return g;
}

// ---------------------------------------------------------------------------
// Transformations

GrammarSpec augment_with_delimiters(const GrammarSpec& g, std::string_view s1, std::string_view s2) {
  if (s1.empty() || s2.empty()) throw GrammarError("delimiters must be non-empty");
  GrammarSpec out = g;
  std::string start = out.fresh_name("__delimited_start");
  Production p;
  p.lhs = start;
  p.rhs = {SymbolRef::terminal(out.literal_terminal(s1)), SymbolRef::nonterminal(g.start()),
           SymbolRef::terminal(out.literal_terminal(s2))};
  out.add_production(std::move(p));
  out.set_start(start);
  out.validate();
  return out;
}

GrammarSpec build_reasoning_grammar(const GrammarSpec& g, std::span<const std::string> encodings) {
  if (encodings.empty()) throw GrammarError("reasoning grammar needs at least one encoding");
  std::set<std::string> seen;
  for (const auto& e : encodings) {
    if (e.empty()) throw GrammarError("empty configuration encoding");
    if (!seen.insert(e).second) throw GrammarError("duplicate configuration encoding " + quote(e));
  }
  std::string augmented = g.fresh_name("__augmented_start");
  std::string reasoning = g.fresh_name("__reasoning");
  std::string step = g.fresh_name("__step");

  GrammarSpec result = g;
  result.add_production({augmented,
                         {SymbolRef::nonterminal(reasoning), SymbolRef::nonterminal(g.start())},
                         "",
                         false});
  result.add_production({reasoning, {SymbolRef::nonterminal(step), SymbolRef::nonterminal(reasoning)},
                         "", false});
  result.add_production({reasoning, {}, "", true});
  for (const auto& e : encodings) {
    result.add_production({step, {SymbolRef::terminal(result.literal_terminal(e))}, "", false});
  }
  result.set_start(augmented);
  result.validate();
  return result;
}

GrammarSpec specialize_terminal(const GrammarSpec& g, std::string_view terminal,
                                const std::set<std::string>& allowed) {
  if (!g.has_terminal(terminal)) throw GrammarError("unknown terminal " + std::string(terminal));
  if (allowed.empty()) throw GrammarError("allowed set for " + std::string(terminal) + " is empty");
  int top = 0;
  for (const auto& [_, def] : g.terminals()) top = std::max(top, def.priority);
  TerminalDef def = g.terminal(terminal);
  def.pattern.clear();
  for (const auto& s : allowed) {
    if (s.empty()) throw GrammarError("allowed strings must be non-empty");
    if (!def.pattern.empty()) def.pattern += '|';
    def.pattern += regex::escape(s);
  }
  def.literal.reset();
  if (allowed.size() == 1) def.literal = *allowed.begin();
  def.priority = top + 1;
  def.dfa.reset();
  GrammarSpec out = g;
  out.replace_terminal(std::move(def));
  return out;
}

GrammarSpec select_start(const GrammarSpec& g, std::string_view rule) {
  if (!g.has_rule(rule)) throw GrammarError("unknown rule " + std::string(rule));
  std::set<std::string> reachable{std::string(rule)};
  std::set<std::string> used_terminals;
  std::vector<std::string> work{std::string(rule)};
  while (!work.empty()) {
    std::string cur = work.back();
    work.pop_back();
    for (const auto* p : g.productions_of(cur)) {
      for (const auto& s : p->rhs) {
        if (s.is_terminal()) {
          used_terminals.insert(s.name);
        } else if (reachable.insert(s.name).second) {
          work.push_back(s.name);
        }
      }
    }
  }
  GrammarSpec out;
  std::vector<const TerminalDef*> ordered;
  for (const auto& [name, def] : g.terminals()) {
    bool ignored = std::find(g.ignored().begin(), g.ignored().end(), name) != g.ignored().end();
    if (used_terminals.count(name) || ignored) ordered.push_back(&def);
  }
  std::sort(ordered.begin(), ordered.end(),
            [](const TerminalDef* a, const TerminalDef* b) { return a->order < b->order; });
  for (const auto* def : ordered) out.add_terminal(*def);
  for (const auto& p : g.productions()) {
    if (reachable.count(p.lhs)) out.add_production(p);
  }
  for (const auto& name : g.ignored()) out.add_ignored(name);
  out.set_start(std::string(rule));
  out.validate();
  return out;
}

std::string to_source(const GrammarSpec& g) {
  std::ostringstream os;
  os << "// start: " << g.start() << "\n";
  for (const auto& p : g.productions()) {
    os << p.lhs << ":";
    if (p.rhs.empty()) os << " <empty>";
    for (const auto& s : p.rhs) os << " " << s.name;
    if (!p.alias.empty()) os << " -> " << p.alias;
    os << "\n";
  }
  for (const auto& [name, def] : g.terminals()) {
    if (def.is_literal() && name == literal_terminal_name(*def.literal)) continue;
    os << name;
    if (def.priority != 0) os << "." << def.priority;
    os << ": /" << def.pattern << "/\n";
  }
  for (const auto& name : g.ignored()) os << "%ignore " << name << "\n";
  return os.str();
}

}  // namespace crane
