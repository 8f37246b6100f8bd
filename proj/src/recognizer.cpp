#include "crane/recognizer.hpp"

#include <algorithm>

namespace crane {

const char* to_string(PrefixStatus s) {
  switch (s) {
    case PrefixStatus::kValidPrefix: return "ValidPrefix";
    case PrefixStatus::kComplete: return "Complete";
    case PrefixStatus::kCompleteAndExtensible: return "CompleteAndExtensible";
    case PrefixStatus::kDead: return "Dead";
  }
  return "?";
}

std::shared_ptr<const CompiledGrammar> compile(const GrammarSpec& g) {
  return std::make_shared<const CompiledGrammar>(g);
}

RecognizerState::RecognizerState(std::shared_ptr<const CompiledGrammar> grammar)
    : grammar_(std::move(grammar)) {
  current_ = earley::initial_set(*grammar_);
  earley::start_scans(*grammar_, current_, scans_);
  refresh_keep_alive();
}

PrefixStatus RecognizerState::status() const {
  bool member = complete();
  bool more = extensible();
  if (member && more) return PrefixStatus::kCompleteAndExtensible;
  if (member) return PrefixStatus::kComplete;
  if (more) return PrefixStatus::kValidPrefix;
  return PrefixStatus::kDead;
}

RecognizerState RecognizerState::advance(std::string_view bytes) const {
  RecognizerState next = *this;
  next.feed(bytes);
  return next;
}

void RecognizerState::feed(std::string_view bytes) {
  std::vector<earley::Scan> scratch;
  earley::SetCache::Key completions;
  for (char c : bytes) feed_byte(static_cast<std::uint8_t>(c), scratch, completions);
  refresh_keep_alive();
}

void RecognizerState::feed_byte(std::uint8_t byte, std::vector<earley::Scan>& scratch,
                                earley::SetCache::Key& completions) {
  ++consumed_;
  if (scans_.empty()) {
    current_.reset();
    return;
  }
  earley::SetPtr set = earley::step(*grammar_, scans_, byte, scratch, completions, nullptr);
  // Sets referenced by surviving scans must outlive this call even when the
  // previous current set is released.
  if (current_ &&
      std::find(scan_origins_.begin(), scan_origins_.end(), current_) == scan_origins_.end()) {
    scan_origins_.push_back(current_);
  }
  current_ = std::move(set);
  scans_.swap(scratch);
}

void RecognizerState::refresh_keep_alive() {
  std::vector<earley::SetPtr> keep;
  auto retain = [&](const earley::EarleySet* origin) {
    for (const auto& k : keep) {
      if (k.get() == origin) return;
    }
    if (current_ && current_.get() == origin) {
      keep.push_back(current_);
      return;
    }
    for (const auto& k : scan_origins_) {
      if (k.get() == origin) {
        keep.push_back(k);
        return;
      }
    }
    keep.push_back(origin->shared_from_this());
  };
  for (const auto& s : scans_) retain(s.origin);
  scan_origins_.swap(keep);
}

RecognizerState init(const GrammarSpec& g) { return RecognizerState(compile(g)); }

RecognizerState init(std::shared_ptr<const CompiledGrammar> g) { return RecognizerState(std::move(g)); }

RecognizerState advance(const RecognizerState& state, std::string_view bytes) {
  return state.advance(bytes);
}

bool is_member(const std::shared_ptr<const CompiledGrammar>& g, std::string_view s) {
  return RecognizerState(g).advance(s).complete();
}

bool is_member(const GrammarSpec& g, std::string_view s) { return is_member(compile(g), s); }

std::vector<Lexeme> lex(const GrammarSpec& g, std::string_view text) {
  std::vector<const TerminalDef*> terms;
  for (const auto& [_, def] : g.terminals()) terms.push_back(&def);
  std::sort(terms.begin(), terms.end(),
            [](const TerminalDef* a, const TerminalDef* b) { return a->order < b->order; });
  const auto& ignored = g.ignored();

  std::vector<Lexeme> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const TerminalDef* best = nullptr;
    std::size_t best_len = 0;
    for (const auto* def : terms) {
      regex::Dfa::State s = def->dfa->start();
      std::size_t len = 0;
      for (std::size_t i = pos; i < text.size() && s != regex::Dfa::kDead; ++i) {
        s = def->dfa->step(s, static_cast<std::uint8_t>(text[i]));
        if (s != regex::Dfa::kDead && def->dfa->accepting(s)) len = i - pos + 1;
      }
      if (len == 0) continue;
      // Declaration order is the iteration order, so a strict comparison
      // keeps the earliest terminal on a full tie.
      if (!best || def->priority > best->priority ||
          (def->priority == best->priority && len > best_len)) {
        best = def;
        best_len = len;
      }
    }
    if (!best) {
      throw GrammarError("no terminal matches at byte " + std::to_string(pos));
    }
    if (std::find(ignored.begin(), ignored.end(), best->name) == ignored.end()) {
      out.push_back({best->name, std::string(text.substr(pos, best_len))});
    }
    pos += best_len;
  }
  return out;
}

}  // namespace crane
