// Byte-level regular expressions compiled to deterministic automata.
//
// The supported syntax is the subset of Python `re` used by grammar
// terminals: literals, escapes (\d \w \s \n \t \xHH ...), `.`, bracket
// classes with ranges and negation, groups `(...)` / `(?:...)`, alternation
// and the quantifiers `? * + {m} {m,} {m,n}` (lazy suffixes are accepted and
// have no effect on the matched language). Anchors and backreferences are
// rejected.
#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace crane::regex {

class DfaBuilder;

class RegexError : public std::runtime_error {
 public:
  RegexError(const std::string& pattern, std::size_t offset, const std::string& what);

  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

/// Deterministic automaton over bytes. Every state that is kept can still
/// reach an accepting state; transitions into states that cannot are
/// reported as `kDead`.
class Dfa {
 public:
  using State = std::int32_t;
  static constexpr State kDead = -1;

  State start() const { return start_; }
  State step(State s, std::uint8_t byte) const {
    return table_[static_cast<std::size_t>(s) * 256 + byte];
  }
  bool accepting(State s) const { return accepting_[static_cast<std::size_t>(s)] != 0; }
  /// Some non-empty continuation from `s` is still accepted.
  bool extensible(State s) const { return extensible_[static_cast<std::size_t>(s)] != 0; }
  std::size_t num_states() const { return accepting_.size(); }

  /// Runs the automaton from `s` over `bytes`; returns kDead on failure.
  State run(State s, std::string_view bytes) const;
  bool matches(std::string_view bytes) const;
  bool matches_empty() const { return start_ != kDead && accepting(start_); }
  bool empty_language() const { return start_ == kDead; }

 private:
  friend class DfaBuilder;

  State start_ = kDead;
  std::vector<State> table_;
  std::vector<std::uint8_t> accepting_;
  std::vector<std::uint8_t> extensible_;
};

/// Compiles `pattern` (Python-flavoured syntax) into a DFA.
Dfa compile(std::string_view pattern);

/// DFA recognising exactly `literal`.
Dfa compile_literal(std::string_view literal);

/// Escapes `literal` so that `compile(escape(literal))` matches it verbatim.
std::string escape(std::string_view literal);

}  // namespace crane::regex
