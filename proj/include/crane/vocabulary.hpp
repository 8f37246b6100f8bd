#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace crane {

using TokenId = std::int32_t;

/// Byte trie over a vocabulary, flattened for cache-friendly traversal.
/// Node 0 is the root; children of a node are contiguous and sorted by byte.
class TokenTrie {
 public:
  struct Node {
    std::uint32_t first_edge = 0;
    std::uint32_t num_edges = 0;
    std::uint32_t first_token = 0;
    std::uint32_t num_tokens = 0;
  };
  struct Edge {
    std::uint8_t byte;
    std::uint32_t child;
  };

  TokenTrie() = default;
  /// Indexes every token except `skip` (the EOS id).
  TokenTrie(std::span<const std::string> tokens, TokenId skip);

  const Node& node(std::uint32_t i) const { return nodes_[i]; }
  std::span<const Edge> edges(const Node& n) const {
    return {edges_.data() + n.first_edge, n.num_edges};
  }
  std::span<const TokenId> tokens(const Node& n) const {
    return {tokens_.data() + n.first_token, n.num_tokens};
  }
  std::size_t num_nodes() const { return nodes_.size(); }
  std::size_t max_depth() const { return max_depth_; }

 private:
  std::vector<Node> nodes_;
  std::vector<Edge> edges_;
  std::vector<TokenId> tokens_;
  std::size_t max_depth_ = 0;
};

/// Token id -> byte string table with a distinguished end-of-sequence token.
/// The EOS token contributes no bytes to detokenized text.
class Vocabulary {
 public:
  Vocabulary() = default;
  Vocabulary(std::vector<std::string> tokens, TokenId eos_id);

  std::size_t size() const { return tokens_.size(); }
  TokenId eos_id() const { return eos_id_; }
  const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const TokenTrie& trie() const { return trie_; }

  std::string detokenize(std::span<const TokenId> ids) const;
  /// Id of the first non-EOS token spelled exactly `bytes`.
  std::optional<TokenId> find(std::string_view bytes) const;
  /// Greedy longest-match tokenization. Throws std::invalid_argument when a
  /// byte cannot be covered by any token.
  std::vector<TokenId> encode_greedy(std::string_view text) const;

 private:
  std::vector<std::string> tokens_;
  TokenId eos_id_ = 0;
  TokenTrie trie_;
};

}  // namespace crane
