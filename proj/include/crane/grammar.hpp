// Context-free grammars with scannerless (regex or literal) terminals.
//
// The source format is the Lark-style notation used by the bundled GSM and
// Prover9 grammars:
//
//   start: space? "<" "<" expr ">" ">"      // rules are lowercase
//   ?atom: NAME "(" VAR ("," VAR)* ")" -> predicate
//   TYPE.4: "int"                           // terminals are UPPERCASE, .N = priority
//   VAR.-1: /[a-z][a-zA-Z0-9_]*/ | /[0-9]+/
//   %ignore WS
//
// Postfix `?`, `*`, `+` and parenthesised groups inside rules are desugared
// into fresh helper nonterminals. `-> alias` labels are kept on productions
// but carry no meaning for recognition.
#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "crane/regex.hpp"

namespace crane {

class GrammarError : public std::runtime_error {
 public:
  explicit GrammarError(const std::string& what) : std::runtime_error(what) {}
  GrammarError(const std::string& what, int line, int column);

  /// 1-based source position, or 0 when the error is not tied to the text.
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_ = 0;
  int column_ = 0;
};

enum class SymbolKind { kNonterminal, kTerminal };

struct SymbolRef {
  SymbolKind kind = SymbolKind::kNonterminal;
  std::string name;

  static SymbolRef nonterminal(std::string n) { return {SymbolKind::kNonterminal, std::move(n)}; }
  static SymbolRef terminal(std::string n) { return {SymbolKind::kTerminal, std::move(n)}; }
  bool is_terminal() const { return kind == SymbolKind::kTerminal; }

  friend bool operator==(const SymbolRef&, const SymbolRef&) = default;
  friend auto operator<=>(const SymbolRef&, const SymbolRef&) = default;
};

struct TerminalDef {
  std::string name;
  /// Regular expression (Python syntax) equivalent to the definition body.
  std::string pattern;
  /// Set when the definition is a single quoted string.
  std::optional<std::string> literal;
  int priority = 0;
  /// Position in declaration order; breaks priority ties.
  int order = 0;
  std::shared_ptr<const regex::Dfa> dfa;

  bool is_literal() const { return literal.has_value(); }

  friend bool operator==(const TerminalDef& a, const TerminalDef& b) {
    return a.name == b.name && a.pattern == b.pattern && a.literal == b.literal &&
           a.priority == b.priority && a.order == b.order;
  }
};

struct Production {
  std::string lhs;
  std::vector<SymbolRef> rhs;
  std::string alias;
  /// True for the empty alternative introduced when desugaring `x?` / `x*`.
  bool epsilon_from_desugar = false;

  friend bool operator==(const Production&, const Production&) = default;
};

class GrammarSpec {
 public:
  GrammarSpec() = default;

  const std::string& start() const { return start_; }
  const std::vector<Production>& productions() const { return productions_; }
  const std::map<std::string, TerminalDef>& terminals() const { return terminals_; }
  const std::set<std::string>& nonterminals() const { return nonterminals_; }
  /// Terminals that may appear between any two tokens and are skipped.
  const std::vector<std::string>& ignored() const { return ignored_; }

  const TerminalDef& terminal(std::string_view name) const;
  bool has_terminal(std::string_view name) const;
  bool has_rule(std::string_view name) const { return nonterminals_.count(std::string(name)) != 0; }
  std::vector<const Production*> productions_of(std::string_view lhs) const;

  /// Checks the structural invariants; throws GrammarError on violation.
  void validate() const;

  /// A rule or terminal name not yet used in this grammar.
  std::string fresh_name(std::string_view stem) const;

  // Mutators used by the grammar transformations.
  void set_start(std::string name) { start_ = std::move(name); }
  void add_production(Production p);
  /// Registers `def` (assigning the next declaration order if order < 0).
  void add_terminal(TerminalDef def);
  void replace_terminal(TerminalDef def);
  void add_ignored(std::string name) { ignored_.push_back(std::move(name)); }
  /// Name of the literal terminal for `text`, creating it if needed.
  std::string literal_terminal(std::string_view text);

  friend bool operator==(const GrammarSpec&, const GrammarSpec&) = default;

 private:
  std::string start_;
  std::set<std::string> nonterminals_;
  std::vector<Production> productions_;
  std::map<std::string, TerminalDef> terminals_;
  std::vector<std::string> ignored_;
  int next_order_ = 0;
};

/// Parses grammar source text. Throws GrammarError (with line/column for
/// syntax errors) on malformed input, undefined symbols, duplicate rules or
/// regexes that fail to compile.
GrammarSpec parse_grammar_text(std::string_view text);

/// G' = s1 G s2: a new start rule wrapping the old one between two literals.
GrammarSpec augment_with_delimiters(const GrammarSpec& g, std::string_view s1,
                                    std::string_view s2);

/// Ga -> R G, R -> S R | <empty>, S -> e1 | ... | en, where the ei are the
/// configuration-encoding literals.
GrammarSpec build_reasoning_grammar(const GrammarSpec& g, std::span<const std::string> encodings);

/// Copy of `g` whose terminal `terminal` matches exactly the strings in
/// `allowed`, at a priority above every other terminal.
GrammarSpec specialize_terminal(const GrammarSpec& g, std::string_view terminal,
                                const std::set<std::string>& allowed);

/// Copy of `g` rooted at `rule`, with unreachable rules and terminals dropped.
GrammarSpec select_start(const GrammarSpec& g, std::string_view rule);

/// Name used for the anonymous terminal of a quoted literal, e.g. `"<<"`.
std::string literal_terminal_name(std::string_view text);

/// Renders `g` back into the source notation (one production per line).
std::string to_source(const GrammarSpec& g);

}  // namespace crane
