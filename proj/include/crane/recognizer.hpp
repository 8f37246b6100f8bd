// Incremental, byte-level recognition of a context-free grammar.
//
// A RecognizerState answers, for the bytes consumed so far, whether they
// form a member of L(G), a viable prefix of some member, or neither. States
// are cheap immutable snapshots: advancing returns a new state and leaves
// the original usable, which is what speculative token probing needs.
#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "crane/earley.hpp"
#include "crane/grammar.hpp"

namespace crane {

enum class PrefixStatus { kValidPrefix, kComplete, kCompleteAndExtensible, kDead };

const char* to_string(PrefixStatus s);

using CompiledGrammar = earley::CompiledGrammar;

std::shared_ptr<const CompiledGrammar> compile(const GrammarSpec& g);

class RecognizerState {
 public:
  explicit RecognizerState(std::shared_ptr<const CompiledGrammar> grammar);

  PrefixStatus status() const;
  bool dead() const { return scans_.empty() && !complete(); }
  /// The consumed bytes form a member of L(G).
  bool complete() const { return current_ && current_->accepts; }
  /// Some non-empty continuation keeps the prefix alive.
  bool extensible() const { return !scans_.empty(); }
  std::size_t consumed() const { return consumed_; }

  /// Snapshot advanced over `bytes`; `*this` is unchanged.
  RecognizerState advance(std::string_view bytes) const;
  /// In-place variant of advance().
  void feed(std::string_view bytes);

  const CompiledGrammar& grammar() const { return *grammar_; }
  const std::shared_ptr<const CompiledGrammar>& grammar_ptr() const { return grammar_; }

  // Low-level access for the token-mask engine.
  const earley::SetPtr& current_set() const { return current_; }
  const std::vector<earley::Scan>& scans() const { return scans_; }

 private:
  void feed_byte(std::uint8_t byte, std::vector<earley::Scan>& scratch,
                 earley::SetCache::Key& completions);
  void refresh_keep_alive();

  std::shared_ptr<const CompiledGrammar> grammar_;
  earley::SetPtr current_;
  std::vector<earley::Scan> scans_;
  std::vector<earley::SetPtr> scan_origins_;
  std::size_t consumed_ = 0;
};

RecognizerState init(const GrammarSpec& g);
RecognizerState init(std::shared_ptr<const CompiledGrammar> g);
RecognizerState advance(const RecognizerState& state, std::string_view bytes);
bool is_member(const GrammarSpec& g, std::string_view s);
bool is_member(const std::shared_ptr<const CompiledGrammar>& g, std::string_view s);

/// One token of a standard (context-free) tokenization.
struct Lexeme {
  std::string terminal;
  std::string text;

  friend bool operator==(const Lexeme&, const Lexeme&) = default;
};

/// Splits `text` into terminals using the disambiguation order applied by
/// the recognizer: higher priority first, then the longest match, then the
/// earlier declaration. Ignored terminals are dropped. Throws GrammarError
/// if some position matches no terminal.
std::vector<Lexeme> lex(const GrammarSpec& g, std::string_view text);

}  // namespace crane
