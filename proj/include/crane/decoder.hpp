// Token-level generation loops: free, fully masked, and CRANE, which masks
// only inside s1 ... s2 windows of the detokenized output.
#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "crane/grammar.hpp"
#include "crane/recognizer.hpp"
#include "crane/token_mask.hpp"
#include "crane/vocabulary.hpp"

namespace crane {

/// Deterministic next-token scorer.
class LanguageModel {
 public:
  virtual ~LanguageModel() = default;
  /// Scores for the token following `tokens`; one entry per vocabulary id.
  virtual ScoreVector scores(std::span<const TokenId> tokens) const = 0;
  virtual const Vocabulary& vocabulary() const = 0;
};

struct Strategy {
  enum class Kind { kGreedy, kTemperature };
  Kind kind = Kind::kGreedy;
  double temperature = 1.0;
  std::uint64_t seed = 0;

  static Strategy greedy() { return {}; }
  static Strategy sample(double t, std::uint64_t seed) { return {Kind::kTemperature, t, seed}; }
};

enum class OnNoViable { kAbort, kCloseWindow };

struct DecodeConfig {
  std::string s1 = "<<";
  std::string s2 = ">>";
  Strategy strategy;
  std::size_t max_new_tokens = 600;
  OnNoViable on_no_viable = OnNoViable::kAbort;

  /// Throws std::invalid_argument on an unusable configuration.
  void validate() const;
};

inline constexpr std::size_t kGsmMaxNewTokens = 600;
inline constexpr std::size_t kFolioMaxNewTokens = 800;

enum class StepMode { kFree, kMasked };
const char* to_string(StepMode m);

struct StepRecord {
  std::size_t index = 0;
  TokenId token = 0;
  std::string bytes;
  StepMode mode = StepMode::kFree;

  friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

/// State of one CRANE generation.
class DecodeSession {
 public:
  /// `g_prime` is the delimited grammar s1 G s2.
  DecodeSession(std::vector<TokenId> prompt, std::shared_ptr<const CompiledGrammar> g_prime,
                const DecodeConfig& cfg);

  const std::vector<TokenId>& tokens() const { return tokens_; }
  std::size_t prompt_length() const { return prompt_length_; }
  /// Token index where the current unconstrained stretch begins. A window
  /// can close inside a token; `text_offset()` is then the exact byte.
  std::size_t pointer() const { return pointer_; }
  /// Byte offset of the unconstrained stretch in the generated text.
  std::size_t text_offset() const { return base_; }
  /// Detokenized generated text (prompt excluded).
  const std::string& text() const { return text_; }
  bool is_constrained() const { return recognizer_.has_value(); }
  /// Open window text, starting with s1; empty when unconstrained.
  const std::string& constrained_text() const { return window_; }
  const std::optional<RecognizerState>& recognizer() const { return recognizer_; }
  const std::vector<StepRecord>& step_log() const { return log_; }
  bool finished() const { return finished_; }
  std::size_t generated() const { return tokens_.size() - prompt_length_; }

 private:
  friend std::pair<DecodeSession, TokenId> crane_step(DecodeSession, const LanguageModel&,
                                                      const DecodeConfig&);
  void sync(const DecodeConfig& cfg);
  void close_at(std::size_t byte_end);
  void append(TokenId tok, const Vocabulary& vocab, StepMode mode);

  std::vector<TokenId> tokens_;
  std::size_t prompt_length_ = 0;
  std::size_t pointer_ = 0;
  std::string text_;
  // End offset in text_ of every generated token.
  std::vector<std::size_t> token_ends_;
  std::size_t base_ = 0;
  std::size_t window_start_ = 0;
  std::string window_;
  std::optional<RecognizerState> recognizer_;
  std::shared_ptr<const CompiledGrammar> grammar_;
  // Tokens that contain s2, or start with a proper suffix of it.
  std::shared_ptr<const std::vector<TokenId>> closers_;
  std::vector<StepRecord> log_;
  std::vector<TokenId> forced_;
  std::mt19937_64 rng_;
  bool finished_ = false;
};

/// One iteration of the CRANE loop. Inside a window the mask also admits a
/// token whose prefix closes the window as a member; the rest of its bytes
/// are free text. Throws NoViableToken under OnNoViable::kAbort when the
/// open window cannot be continued.
std::pair<DecodeSession, TokenId> crane_step(DecodeSession session, const LanguageModel& lm,
                                             const DecodeConfig& cfg);

/// Suffix of `curr_gen` from the first occurrence of `s1`. Throws
/// std::invalid_argument if `s1` does not occur.
std::string extract_constrained(std::string_view curr_gen, std::string_view s1);

struct GenerationResult {
  /// Generated ids, including a final EOS when one was emitted.
  std::vector<TokenId> tokens;
  std::vector<StepRecord> steps;
  bool stopped_on_eos = false;
  /// A constrained window (or the fully constrained output) was left
  /// unfinished when the token budget ran out.
  bool incomplete = false;

  std::string text(const Vocabulary& v) const { return v.detokenize(tokens); }
  /// Generated tokens excluding EOS.
  std::size_t token_count(const Vocabulary& v) const;
};

/// CRANE generation with output grammar `g` (G' = s1 g s2 is built here).
GenerationResult crane_generate(std::span<const TokenId> prompt, const LanguageModel& lm,
                                const GrammarSpec& g, const DecodeConfig& cfg);
GenerationResult crane_generate(std::span<const TokenId> prompt, const LanguageModel& lm,
                                std::shared_ptr<const CompiledGrammar> g_prime,
                                const DecodeConfig& cfg);

/// Every step masked against `g`. Throws NoViableToken on a dead end.
GenerationResult constrained_generate(std::span<const TokenId> prompt, const LanguageModel& lm,
                                      const GrammarSpec& g, const DecodeConfig& cfg);
GenerationResult constrained_generate(std::span<const TokenId> prompt, const LanguageModel& lm,
                                      std::shared_ptr<const CompiledGrammar> g,
                                      const DecodeConfig& cfg);

GenerationResult unconstrained_generate(std::span<const TokenId> prompt, const LanguageModel& lm,
                                        const DecodeConfig& cfg);

/// Picks a token from (possibly masked) scores. Greedy ties go to the lowest id.
TokenId select_token(const ScoreVector& scores, const Strategy& strategy, std::mt19937_64& rng);

/// JSON array of {index, token_id, bytes, mode}.
std::string step_log_json(const std::vector<StepRecord>& steps);

}  // namespace crane
