#include "crane/token_mask.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <unordered_map>

namespace crane {

std::size_t MaskBits::count() const {
  std::size_t n = 0;
  for (auto w : words_) n += static_cast<std::size_t>(std::popcount(w));
  return n;
}

bool MaskBits::any() const {
  return std::any_of(words_.begin(), words_.end(), [](std::uint64_t w) { return w != 0; });
}

std::vector<TokenId> MaskBits::ids() const {
  std::vector<TokenId> out;
  for (std::size_t i = 0; i < size_; ++i) {
    if (test(i)) out.push_back(static_cast<TokenId>(i));
  }
  return out;
}

namespace {

// Depth-first walk of the vocabulary trie. Every trie edge is one recognizer
// step. Positions with identical pending scans behave identically from then
// on, so scan vectors are interned and each (configuration, byte) transition
// is computed once per call.
class MaskWalker {
 public:
  MaskWalker(const RecognizerState& state, const Vocabulary& vocab)
      : g_(state.grammar()), trie_(vocab.trie()), mask_(vocab.size()) {}

  MaskBits run(const RecognizerState& state, const Vocabulary& vocab) {
    const auto& root = trie_.node(0);
    if (!state.scans().empty() || state.complete()) {
      // Empty tokens leave the state as is.
      for (TokenId id : trie_.tokens(root)) mask_.set(static_cast<std::size_t>(id));
    }
    if (!state.scans().empty()) walk(root, intern(state.scans()));
    if (state.complete()) mask_.set(static_cast<std::size_t>(vocab.eos_id()));
    return std::move(mask_);
  }

 private:
  static constexpr std::int32_t kUnknown = -2;
  static constexpr std::int32_t kDeadConfig = -1;

  struct ScanHash {
    std::size_t operator()(const std::vector<earley::Scan>& v) const {
      std::size_t h = v.size();
      for (const auto& s : v) {
        h = h * 1000003u ^ static_cast<std::size_t>(s.terminal);
        h = h * 1000003u ^ static_cast<std::size_t>(s.state);
        h = h * 1000003u ^ reinterpret_cast<std::uintptr_t>(s.origin);
      }
      return h;
    }
  };

  std::int32_t intern(const std::vector<earley::Scan>& scans) {
    auto [it, fresh] = ids_.try_emplace(scans, static_cast<std::int32_t>(configs_.size()));
    if (fresh) {
      configs_.push_back(&it->first);
      next_.emplace_back();
    }
    return it->second;
  }

  // Next configuration after `byte`, or kDeadConfig.
  std::int32_t transition(std::int32_t from, std::uint8_t byte) {
    auto f = static_cast<std::size_t>(from);
    if (next_[f].empty()) next_[f].assign(256, kUnknown);
    if (next_[f][byte] == kUnknown) {
      earley::SetPtr set = earley::step(g_, *configs_[f], byte, out_, completions_, &cache_);
      bool accepts = set && set->accepts;
      next_[f][byte] = out_.empty() && !accepts ? kDeadConfig : intern(out_);
    }
    return next_[f][byte];
  }

  void walk(const TokenTrie::Node& node, std::int32_t config) {
    for (const auto& edge : trie_.edges(node)) {
      std::int32_t to = transition(config, edge.byte);
      if (to == kDeadConfig) continue;
      const auto& child = trie_.node(edge.child);
      for (TokenId id : trie_.tokens(child)) mask_.set(static_cast<std::size_t>(id));
      if (child.num_edges > 0 && !configs_[static_cast<std::size_t>(to)]->empty()) walk(child, to);
    }
  }

  const CompiledGrammar& g_;
  const TokenTrie& trie_;
  MaskBits mask_;
  std::unordered_map<std::vector<earley::Scan>, std::int32_t, ScanHash> ids_;
  std::vector<const std::vector<earley::Scan>*> configs_;
  std::vector<std::vector<std::int32_t>> next_;
  std::vector<earley::Scan> out_;
  earley::SetCache::Key completions_;
  earley::SetCache cache_;
};

}  // namespace

MaskBits admissible_tokens(const RecognizerState& state, const Vocabulary& vocab) {
  return MaskWalker(state, vocab).run(state, vocab);
}

MaskBits compute_mask(const RecognizerState& state, const Vocabulary& vocab) {
  MaskBits m = admissible_tokens(state, vocab);
  if (!m.any()) {
    throw NoViableToken("no token keeps the prefix viable (status " +
                        std::string(to_string(state.status())) + ", " +
                        std::to_string(state.consumed()) + " bytes consumed)");
  }
  return m;
}

ScoreVector apply_mask(const ScoreVector& scores, const MaskBits& mask) {
  if (scores.size() != mask.size()) {
    throw std::invalid_argument("score vector has " + std::to_string(scores.size()) +
                                " entries, mask has " + std::to_string(mask.size()));
  }
  ScoreVector out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out[i] = mask.test(i) ? scores[i] : -std::numeric_limits<double>::infinity();
  }
  return out;
}

std::vector<double> softmax(const ScoreVector& scores) {
  std::vector<double> p(scores.size(), 0.0);
  double hi = -std::numeric_limits<double>::infinity();
  for (double s : scores) hi = std::max(hi, s);
  if (!std::isfinite(hi)) return p;
  double z = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    p[i] = std::isinf(scores[i]) ? 0.0 : std::exp(scores[i] - hi);
    z += p[i];
  }
  for (double& v : p) v /= z;
  return p;
}

TokenId argmax(const ScoreVector& scores) {
  if (scores.empty()) throw std::invalid_argument("argmax of an empty score vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return static_cast<TokenId>(best);
}

}  // namespace crane
