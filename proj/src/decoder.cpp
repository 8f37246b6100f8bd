#include "crane/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <limits>
#include <stdexcept>

namespace crane {

void DecodeConfig::validate() const {
  if (s1.empty() || s2.empty()) throw std::invalid_argument("delimiters must be non-empty");
  if (max_new_tokens < 1) throw std::invalid_argument("max_new_tokens must be at least 1");
  if (strategy.kind == Strategy::Kind::kTemperature && !(strategy.temperature > 0)) {
    throw std::invalid_argument("temperature must be positive");
  }
}

const char* to_string(StepMode m) { return m == StepMode::kMasked ? "masked" : "free"; }

std::size_t GenerationResult::token_count(const Vocabulary& v) const {
  return static_cast<std::size_t>(
      std::count_if(tokens.begin(), tokens.end(), [&](TokenId t) { return t != v.eos_id(); }));
}

TokenId select_token(const ScoreVector& scores, const Strategy& strategy, std::mt19937_64& rng) {
  if (strategy.kind == Strategy::Kind::kGreedy) return argmax(scores);
  ScoreVector scaled(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) scaled[i] = scores[i] / strategy.temperature;
  std::vector<double> p = softmax(scaled);
  // 53 random bits, so the draw is identical on every platform.
  double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  double acc = 0;
  std::size_t last = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0) continue;
    last = i;
    acc += p[i];
    if (u < acc) return static_cast<TokenId>(i);
  }
  return static_cast<TokenId>(last);
}

std::string extract_constrained(std::string_view curr_gen, std::string_view s1) {
  auto pos = curr_gen.find(s1);
  if (pos == std::string_view::npos) {
    throw std::invalid_argument("delimiter does not occur in the current generation");
  }
  return std::string(curr_gen.substr(pos));
}

namespace {

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

// Bytes still needed to close `window` with `s2`, reusing the longest
// suffix of the window that is a prefix of `s2`.
std::string missing_close(std::string_view window, std::string_view s2) {
  for (std::size_t k = std::min(window.size(), s2.size() - 1); k > 0; --k) {
    if (window.substr(window.size() - k) == s2.substr(0, k)) return std::string(s2.substr(k));
  }
  return std::string(s2);
}

std::string printable(std::string_view bytes) {
  std::string out;
  for (char c : bytes) {
    auto b = static_cast<unsigned char>(c);
    if (b == '\n') {
      out += "\\n";
    } else if (b < 32 || b >= 127) {
      static const char* hex = "0123456789abcdef";
      out += "\\x";
      out += hex[b >> 4];
      out += hex[b & 15];
    } else {
      out += c;
    }
  }
  return out;
}

std::string diagnostics(const RecognizerState& st, std::string_view text, const ScoreVector& scores,
                        const Vocabulary& vocab) {
  std::string msg = "no viable token: status " + std::string(to_string(st.status())) + ", last bytes \"" +
                    printable(text.substr(text.size() > 32 ? text.size() - 32 : 0)) +
                    "\", top blocked tokens:";
  std::vector<TokenId> ids(scores.size());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<TokenId>(i);
  std::size_t k = std::min<std::size_t>(10, ids.size());
  std::partial_sort(ids.begin(), ids.begin() + static_cast<long>(k), ids.end(), [&](TokenId a, TokenId b) {
    auto sa = scores[static_cast<std::size_t>(a)];
    auto sb = scores[static_cast<std::size_t>(b)];
    return sa != sb ? sa > sb : a < b;
  });
  for (std::size_t i = 0; i < k; ++i) {
    msg += " " + std::to_string(ids[i]) + ":\"" + printable(vocab.token(ids[i])) + "\"";
  }
  return msg;
}

}  // namespace

DecodeSession::DecodeSession(std::vector<TokenId> prompt, std::shared_ptr<const CompiledGrammar> g_prime,
                             const DecodeConfig& cfg)
    : tokens_(std::move(prompt)),
      prompt_length_(tokens_.size()),
      pointer_(tokens_.size()),
      grammar_(std::move(g_prime)),
      rng_(cfg.strategy.seed) {
  cfg.validate();
}

void DecodeSession::close_at(std::size_t byte_end) {
  base_ = byte_end;
  // First token that still has bytes at or after byte_end.
  auto it = std::upper_bound(token_ends_.begin(), token_ends_.end(), byte_end);
  pointer_ = prompt_length_ + static_cast<std::size_t>(it - token_ends_.begin());
  recognizer_.reset();
  window_.clear();
  forced_.clear();
}

// Opens windows and feeds them every byte generated so far, closing each
// one at the first byte where it ends with s2 as a complete member.
void DecodeSession::sync(const DecodeConfig& cfg) {
  while (true) {
    if (!recognizer_) {
      auto pos = text_.find(cfg.s1, base_);
      if (pos == std::string::npos) return;
      window_start_ = pos;
      recognizer_.emplace(grammar_);
    }
    bool closed = false;
    std::size_t at = window_start_ + recognizer_->consumed();
    for (; at < text_.size(); ++at) {
      recognizer_->feed(std::string_view(text_).substr(at, 1));
      if (recognizer_->complete() && ends_with(std::string_view(text_).substr(0, at + 1), cfg.s2)) {
        closed = true;
        break;
      }
      if (recognizer_->dead()) {
        at = text_.size();
        break;
      }
    }
    if (!closed) {
      window_ = text_.substr(window_start_, std::min(text_.size(), window_start_ + recognizer_->consumed()) - window_start_);
      return;
    }
    close_at(at + 1);
  }
}

void DecodeSession::append(TokenId tok, const Vocabulary& vocab, StepMode mode) {
  tokens_.push_back(tok);
  const bool eos = tok == vocab.eos_id();
  if (!eos) text_ += vocab.token(tok);
  token_ends_.push_back(text_.size());
  log_.push_back({log_.size(), tok, eos ? "" : vocab.token(tok), mode});
  if (eos) finished_ = true;
}

namespace {

std::shared_ptr<const std::vector<TokenId>> find_closers(const Vocabulary& vocab, std::string_view s2) {
  auto out = std::make_shared<std::vector<TokenId>>();
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    auto id = static_cast<TokenId>(i);
    if (id == vocab.eos_id()) continue;
    std::string_view t = vocab.token(id);
    bool hit = t.find(s2) != std::string_view::npos;
    for (std::size_t k = 1; k < s2.size() && !hit; ++k) hit = t.substr(0, k) == s2.substr(s2.size() - k);
    if (hit) out->push_back(id);
  }
  return out;
}

// The token brings the window to a complete member ending in s2 before its
// last byte.
bool closes_inside(const RecognizerState& st, std::string_view window, std::string_view token,
                   std::string_view s2) {
  RecognizerState probe = st;
  std::string tail(window.substr(window.size() > s2.size() ? window.size() - s2.size() : 0));
  for (std::size_t i = 0; i + 1 < token.size(); ++i) {
    probe.feed(token.substr(i, 1));
    if (probe.dead()) return false;
    tail += token[i];
    if (probe.complete() && ends_with(tail, s2)) return true;
  }
  return false;
}

}  // namespace

std::pair<DecodeSession, TokenId> crane_step(DecodeSession s, const LanguageModel& lm,
                                             const DecodeConfig& cfg) {
  if (s.finished_) throw std::logic_error("crane_step after end of sequence");
  const Vocabulary& vocab = lm.vocabulary();

  if (!s.forced_.empty()) {
    TokenId tok = s.forced_.front();
    s.forced_.erase(s.forced_.begin());
    s.append(tok, vocab, StepMode::kMasked);
    if (s.forced_.empty()) s.close_at(s.text_.size());
    return {std::move(s), tok};
  }

  s.sync(cfg);
  ScoreVector scores = lm.scores(s.tokens_);
  if (scores.size() != vocab.size()) {
    throw std::runtime_error("language model returned " + std::to_string(scores.size()) +
                             " scores for a vocabulary of " + std::to_string(vocab.size()));
  }
  if (!s.recognizer_) {
    TokenId tok = select_token(scores, cfg.strategy, s.rng_);
    s.append(tok, vocab, StepMode::kFree);
    s.sync(cfg);
    return {std::move(s), tok};
  }

  MaskBits mask = admissible_tokens(*s.recognizer_, vocab);
  if (!s.closers_) s.closers_ = find_closers(vocab, cfg.s2);
  for (TokenId t : *s.closers_) {
    auto i = static_cast<std::size_t>(t);
    if (!mask.test(i) && closes_inside(*s.recognizer_, s.window_, vocab.token(t), cfg.s2)) mask.set(i);
  }
  if (!mask.any()) {
    if (cfg.on_no_viable == OnNoViable::kAbort) {
      throw NoViableToken(diagnostics(*s.recognizer_, s.window_, scores, vocab));
    }
    try {
      s.forced_ = vocab.encode_greedy(missing_close(s.window_, cfg.s2));
    } catch (const std::invalid_argument&) {
      throw NoViableToken(diagnostics(*s.recognizer_, s.window_, scores, vocab) +
                          "; the closing delimiter cannot be tokenized");
    }
    std::vector<TokenId> forced = std::move(s.forced_);
    s.forced_.assign(forced.begin() + 1, forced.end());
    s.append(forced.front(), vocab, StepMode::kMasked);
    if (s.forced_.empty()) s.close_at(s.text_.size());
    return {std::move(s), forced.front()};
  }

  TokenId tok = select_token(apply_mask(scores, mask), cfg.strategy, s.rng_);
  s.append(tok, vocab, StepMode::kMasked);
  s.sync(cfg);
  return {std::move(s), tok};
}

GenerationResult crane_generate(std::span<const TokenId> prompt, const LanguageModel& lm,
                                std::shared_ptr<const CompiledGrammar> g_prime, const DecodeConfig& cfg) {
  DecodeSession session(std::vector<TokenId>(prompt.begin(), prompt.end()), std::move(g_prime), cfg);
  while (!session.finished() && session.generated() < cfg.max_new_tokens) {
    session = crane_step(std::move(session), lm, cfg).first;
  }
  GenerationResult r;
  r.tokens.assign(session.tokens().begin() + static_cast<long>(session.prompt_length()), session.tokens().end());
  r.steps = session.step_log();
  r.stopped_on_eos = session.finished();
  r.incomplete = session.is_constrained();
  return r;
}

GenerationResult crane_generate(std::span<const TokenId> prompt, const LanguageModel& lm,
                                const GrammarSpec& g, const DecodeConfig& cfg) {
  return crane_generate(prompt, lm, compile(augment_with_delimiters(g, cfg.s1, cfg.s2)), cfg);
}

GenerationResult constrained_generate(std::span<const TokenId> prompt, const LanguageModel& lm,
                                      std::shared_ptr<const CompiledGrammar> g, const DecodeConfig& cfg) {
  cfg.validate();
  const Vocabulary& vocab = lm.vocabulary();
  std::vector<TokenId> tokens(prompt.begin(), prompt.end());
  std::mt19937_64 rng(cfg.strategy.seed);
  RecognizerState st(std::move(g));
  std::string text;
  GenerationResult r;
  while (r.tokens.size() < cfg.max_new_tokens) {
    ScoreVector scores = lm.scores(tokens);
    MaskBits mask = admissible_tokens(st, vocab);
    if (!mask.any()) throw NoViableToken(diagnostics(st, text, scores, vocab));
    TokenId tok = select_token(apply_mask(scores, mask), cfg.strategy, rng);
    tokens.push_back(tok);
    r.tokens.push_back(tok);
    bool eos = tok == vocab.eos_id();
    r.steps.push_back({r.steps.size(), tok, eos ? "" : vocab.token(tok), StepMode::kMasked});
    if (eos) {
      r.stopped_on_eos = true;
      break;
    }
    text += vocab.token(tok);
    st.feed(vocab.token(tok));
  }
  r.incomplete = !r.stopped_on_eos;
  return r;
}

GenerationResult constrained_generate(std::span<const TokenId> prompt, const LanguageModel& lm,
                                      const GrammarSpec& g, const DecodeConfig& cfg) {
  return constrained_generate(prompt, lm, compile(g), cfg);
}

GenerationResult unconstrained_generate(std::span<const TokenId> prompt, const LanguageModel& lm,
                                        const DecodeConfig& cfg) {
  cfg.validate();
  const Vocabulary& vocab = lm.vocabulary();
  std::vector<TokenId> tokens(prompt.begin(), prompt.end());
  std::mt19937_64 rng(cfg.strategy.seed);
  GenerationResult r;
  while (r.tokens.size() < cfg.max_new_tokens) {
    TokenId tok = select_token(lm.scores(tokens), cfg.strategy, rng);
    tokens.push_back(tok);
    r.tokens.push_back(tok);
    bool eos = tok == vocab.eos_id();
    r.steps.push_back({r.steps.size(), tok, eos ? "" : vocab.token(tok), StepMode::kFree});
    if (eos) {
      r.stopped_on_eos = true;
      break;
    }
  }
  return r;
}

std::string step_log_json(const std::vector<StepRecord>& steps) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& s : steps) {
    arr.push_back({{"index", s.index}, {"token_id", s.token}, {"bytes", s.bytes}, {"mode", to_string(s.mode)}});
  }
  return arr.dump(2, ' ', false, nlohmann::json::error_handler_t::replace);
}

}  // namespace crane
