// Internal representation shared by the recognizer and the token-mask
// engine: a grammar compiled to integer symbols and the Earley sets built
// over it. Not part of the stable API.
#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "crane/grammar.hpp"
#include "crane/regex.hpp"

namespace crane::earley {

/// Right-hand-side symbols: `>= 0` is a nonterminal id, `< 0` is terminal
/// `~symbol`.
using Symbol = std::int32_t;

inline constexpr Symbol terminal_symbol(int terminal) { return ~terminal; }
inline constexpr int terminal_of(Symbol s) { return ~s; }

struct CompiledProduction {
  int lhs = 0;
  std::vector<Symbol> rhs;
};

struct CompiledTerminal {
  std::string name;
  std::shared_ptr<const regex::Dfa> dfa;
  int priority = 0;
  int order = 0;
  bool ignored = false;
};

class CompiledGrammar {
 public:
  explicit CompiledGrammar(const GrammarSpec& g);

  /// productions()[0] is the synthetic `S' -> start`.
  const std::vector<CompiledProduction>& productions() const { return productions_; }
  const std::vector<int>& productions_of(int nonterminal) const {
    return by_lhs_[static_cast<std::size_t>(nonterminal)];
  }
  bool nullable(int nonterminal) const { return nullable_[static_cast<std::size_t>(nonterminal)] != 0; }
  const std::vector<CompiledTerminal>& terminals() const { return terminals_; }
  const CompiledTerminal& terminal(int t) const { return terminals_[static_cast<std::size_t>(t)]; }
  const std::vector<int>& ignored() const { return ignored_; }
  std::size_t num_nonterminals() const { return nonterminal_names_.size(); }
  const std::string& nonterminal_name(int n) const { return nonterminal_names_[static_cast<std::size_t>(n)]; }
  /// False when L(G) is empty.
  bool productive_start() const { return productive_start_; }

 private:
  std::vector<CompiledProduction> productions_;
  std::vector<std::vector<int>> by_lhs_;
  std::vector<char> nullable_;
  std::vector<CompiledTerminal> terminals_;
  std::vector<int> ignored_;
  std::vector<std::string> nonterminal_names_;
  bool productive_start_ = true;
};

struct EarleySet;

struct Item {
  std::uint32_t production;
  std::uint32_t dot;
  const EarleySet* origin;

  friend bool operator==(const Item&, const Item&) = default;
};

struct EarleySet : std::enable_shared_from_this<EarleySet> {
  std::vector<Item> items;
  /// (next symbol, item index), sorted by symbol; used by completion.
  std::vector<std::pair<Symbol, std::uint32_t>> waiting;
  /// Terminals whose scans start at this set (expected ones plus ignored).
  std::vector<int> scan_terminals;
  /// The synthetic start item is complete here.
  bool accepts = false;
  std::vector<std::shared_ptr<const EarleySet>> keep_alive;

  std::span<const std::pair<Symbol, std::uint32_t>> waiting_on(Symbol s) const;
};

using SetPtr = std::shared_ptr<const EarleySet>;

/// An in-progress terminal match that started at `origin`.
struct Scan {
  std::int32_t terminal;
  regex::Dfa::State state;
  const EarleySet* origin;

  friend bool operator==(const Scan&, const Scan&) = default;
};

/// Memo of Earley sets keyed by the terminal completions that produced them.
/// Two positions reached by the same completions have identical sets, so
/// probing many tokens can share them.
class SetCache {
 public:
  using Key = std::vector<std::pair<int, const EarleySet*>>;

  SetPtr find(const Key& key) const;
  void insert(Key key, SetPtr set);
  std::size_t size() const { return map_.size(); }
  void clear() { map_.clear(); }

 private:
  struct Hash {
    std::size_t operator()(const Key& k) const;
  };
  std::unordered_map<Key, SetPtr, Hash> map_;
};

/// Builds the initial Earley set of `g`.
SetPtr initial_set(const CompiledGrammar& g);

/// Starts a scan for every terminal expected by `set`.
void start_scans(const CompiledGrammar& g, const SetPtr& set, std::vector<Scan>& out);

/// Consumes one byte: `out` receives the surviving and newly started scans;
/// returns the Earley set at the new position or null if no terminal ended
/// there. `completions` is scratch space.
SetPtr step(const CompiledGrammar& g, std::span<const Scan> in, std::uint8_t byte,
            std::vector<Scan>& out, SetCache::Key& completions, SetCache* cache);

}  // namespace crane::earley
