// Language models behind the decoder interface: a scripted table for tests,
// a model that replays a Turing machine, and an HTTP client.
#pragma once

#include <atomic>
#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "crane/decoder.hpp"
#include "crane/turing.hpp"

namespace crane {

/// Scores keyed by the end of the detokenized context; the longest matching
/// suffix wins. Entries that share a suffix merge into one ranked list.
///
/// Fixture JSON:
///   {"vocab": ["</s>", "A", ...], "eos_id": 0,
///    "entries": [{"suffix": "Q:", "next_token": "A"},
///                {"suffix": "Q: A", "scores": {"B": 2.0, "C": 1.0}},
///                {"context": "Q:", "script": " A B", "eos": true}],
///    "default": "uniform" | [s0, s1, ...]}
/// `next_token` may be a token string or id. A `script` entry drives greedy
/// decoding from `context` through the text and then EOS; missing byte
/// tokens are added to the vocabulary.
class ScriptedLM : public LanguageModel {
 public:
  ScriptedLM(Vocabulary vocab, ScoreVector default_scores = {});

  static ScriptedLM from_json_text(std::string_view text);

  /// Appends `token` to the ranked candidates after `suffix`.
  void add_next(const std::string& suffix, TokenId token);
  void add_scores(const std::string& suffix, ScoreVector scores);
  /// Greedy decoding after `context` yields the greedy tokenization of
  /// `text`, then EOS when `eos` is set.
  void add_script(const std::string& context, const std::string& text, bool eos = true);

  ScoreVector scores(std::span<const TokenId> tokens) const override;
  const Vocabulary& vocabulary() const override { return vocab_; }

  /// Scores for a detokenized context.
  ScoreVector scores_for_text(std::string_view context) const;

 private:
  struct Entry {
    std::vector<TokenId> ranked;
    std::optional<ScoreVector> scores;
  };
  Entry& entry(const std::string& suffix);

  Vocabulary vocab_;
  ScoreVector default_;
  std::vector<Entry> entries_;
  // Trie over reversed suffixes; node 0 is the empty suffix.
  struct Node {
    std::map<char, std::uint32_t> children;
    std::int32_t entry = -1;
  };
  std::vector<Node> nodes_{Node{}};
};

/// Next-token function of a machine M: after the input symbols it emits the
/// encodings of M's run one per step, then the output M(x), then EOS.
class TMBackedLM : public LanguageModel {
 public:
  explicit TMBackedLM(tm::TuringMachine machine, tm::StepBudget budget = {});

  ScoreVector scores(std::span<const TokenId> tokens) const override;
  const Vocabulary& vocabulary() const override { return vocab_; }

  std::vector<TokenId> encode_input(std::string_view x) const;
  TokenId symbol_token(char c) const;
  TokenId encoding_token(const std::string& encoding) const;
  /// Number of contexts that could not be replayed (they got uniform scores).
  std::size_t malformed_contexts() const { return malformed_.load(); }

 private:
  /// Tokens after the input, ending in EOS; null if M does not halt.
  std::shared_ptr<const std::vector<TokenId>> continuation_for(const std::string& x) const;

  tm::TuringMachine machine_;
  tm::StepBudget budget_;
  Vocabulary vocab_;
  std::map<char, TokenId> symbol_ids_;
  std::map<std::string, TokenId> encoding_ids_;
  mutable std::mutex mu_;
  mutable std::unordered_map<std::string, std::shared_ptr<const std::vector<TokenId>>> runs_;
  mutable std::atomic<std::size_t> malformed_{0};
};

class RemoteError : public std::runtime_error {
 public:
  enum class Kind { kTimeout, kSchemaMismatch, kVocabMismatch, kTransport };
  RemoteError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// Client for an inference server:
///   GET  /vocab -> {"tokens": [base64, ...], "eos_id": int}
///   POST /score {"token_ids": [...]} -> {"scores": [float x |V|]}
/// The vocabulary is fetched once on construction.
class RemoteLM : public LanguageModel {
 public:
  explicit RemoteLM(std::string endpoint, std::chrono::milliseconds timeout = std::chrono::seconds(30));

  ScoreVector scores(std::span<const TokenId> tokens) const override;
  const Vocabulary& vocabulary() const override { return vocab_; }

 private:
  std::string get(const std::string& path) const;
  std::string post(const std::string& path, const std::string& body) const;

  std::string host_;
  int port_ = 80;
  std::chrono::milliseconds timeout_;
  Vocabulary vocab_;
};

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

/// Builds a model from "scripted:FILE", "tm:NAME_OR_FILE" or "remote:URL".
std::unique_ptr<LanguageModel> make_language_model(const std::string& spec);

}  // namespace crane
