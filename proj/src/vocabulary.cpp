#include "crane/vocabulary.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

namespace crane {

TokenTrie::TokenTrie(std::span<const std::string> tokens, TokenId skip) {
  // Build a pointer trie first, then flatten breadth-first.
  struct Tmp {
    std::map<std::uint8_t, std::uint32_t> children;
    std::vector<TokenId> tokens;
    std::size_t depth = 0;
  };
  std::vector<Tmp> tmp(1);
  for (std::size_t id = 0; id < tokens.size(); ++id) {
    if (static_cast<TokenId>(id) == skip) continue;
    std::uint32_t cur = 0;
    for (char c : tokens[id]) {
      auto b = static_cast<std::uint8_t>(c);
      auto it = tmp[cur].children.find(b);
      if (it == tmp[cur].children.end()) {
        auto next = static_cast<std::uint32_t>(tmp.size());
        std::size_t depth = tmp[cur].depth + 1;
        tmp[cur].children.emplace(b, next);
        tmp.push_back({});
        tmp.back().depth = depth;
        max_depth_ = std::max(max_depth_, depth);
        cur = next;
      } else {
        cur = it->second;
      }
    }
    tmp[cur].tokens.push_back(static_cast<TokenId>(id));
  }

  std::vector<std::uint32_t> order{0};
  std::vector<std::uint32_t> new_index(tmp.size(), 0);
  for (std::size_t i = 0; i < order.size(); ++i) {
    for (const auto& [_, child] : tmp[order[i]].children) {
      new_index[child] = static_cast<std::uint32_t>(order.size());
      order.push_back(child);
    }
  }
  nodes_.resize(tmp.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    const Tmp& t = tmp[order[i]];
    Node& n = nodes_[i];
    n.first_edge = static_cast<std::uint32_t>(edges_.size());
    n.num_edges = static_cast<std::uint32_t>(t.children.size());
    for (const auto& [b, child] : t.children) edges_.push_back({b, new_index[child]});
    n.first_token = static_cast<std::uint32_t>(tokens_.size());
    n.num_tokens = static_cast<std::uint32_t>(t.tokens.size());
    tokens_.insert(tokens_.end(), t.tokens.begin(), t.tokens.end());
  }
}

Vocabulary::Vocabulary(std::vector<std::string> tokens, TokenId eos_id)
    : tokens_(std::move(tokens)), eos_id_(eos_id) {
  if (eos_id_ < 0 || static_cast<std::size_t>(eos_id_) >= tokens_.size()) {
    throw std::invalid_argument("eos id " + std::to_string(eos_id_) + " outside vocabulary of size " +
                                std::to_string(tokens_.size()));
  }
  trie_ = TokenTrie(tokens_, eos_id_);
}

std::string Vocabulary::detokenize(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) {
    if (id != eos_id_) out += token(id);
  }
  return out;
}

std::optional<TokenId> Vocabulary::find(std::string_view bytes) const {
  std::uint32_t cur = 0;
  for (char c : bytes) {
    const auto& n = trie_.node(cur);
    auto edges = trie_.edges(n);
    auto it = std::lower_bound(edges.begin(), edges.end(), static_cast<std::uint8_t>(c),
                               [](const TokenTrie::Edge& e, std::uint8_t b) { return e.byte < b; });
    if (it == edges.end() || it->byte != static_cast<std::uint8_t>(c)) return std::nullopt;
    cur = it->child;
  }
  auto toks = trie_.tokens(trie_.node(cur));
  if (toks.empty()) return std::nullopt;
  return toks.front();
}

std::vector<TokenId> Vocabulary::encode_greedy(std::string_view text) const {
  std::vector<TokenId> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::uint32_t cur = 0;
    std::optional<TokenId> best;
    std::size_t best_len = 0;
    for (std::size_t i = pos; i < text.size(); ++i) {
      auto edges = trie_.edges(trie_.node(cur));
      auto b = static_cast<std::uint8_t>(text[i]);
      auto it = std::lower_bound(edges.begin(), edges.end(), b,
                                 [](const TokenTrie::Edge& e, std::uint8_t v) { return e.byte < v; });
      if (it == edges.end() || it->byte != b) break;
      cur = it->child;
      auto toks = trie_.tokens(trie_.node(cur));
      if (!toks.empty()) {
        best = toks.front();
        best_len = i - pos + 1;
      }
    }
    if (!best) {
      throw std::invalid_argument("no token covers byte " + std::to_string(pos) + " of input");
    }
    out.push_back(*best);
    pos += best_len;
  }
  return out;
}

}  // namespace crane
