#include "crane/lm_adapters.hpp"

#include <algorithm>
#include <boost/beast/core/detail/base64.hpp>
#include <httplib.h>
#include <json.hpp>
#include <set>

#include "crane/resources.hpp"

namespace crane {

// ---------------------------------------------------------------- scripted

ScriptedLM::ScriptedLM(Vocabulary vocab, ScoreVector default_scores)
    : vocab_(std::move(vocab)), default_(std::move(default_scores)) {
  if (default_.empty()) default_.assign(vocab_.size(), 0.0);
  if (default_.size() != vocab_.size()) {
    throw std::invalid_argument("default scores have " + std::to_string(default_.size()) +
                                " entries for a vocabulary of " + std::to_string(vocab_.size()));
  }
}

ScriptedLM::Entry& ScriptedLM::entry(const std::string& suffix) {
  std::uint32_t node = 0;
  for (auto it = suffix.rbegin(); it != suffix.rend(); ++it) {
    auto found = nodes_[node].children.find(*it);
    if (found == nodes_[node].children.end()) {
      auto next = static_cast<std::uint32_t>(nodes_.size());
      nodes_[node].children.emplace(*it, next);
      nodes_.emplace_back();
      node = next;
    } else {
      node = found->second;
    }
  }
  if (nodes_[node].entry < 0) {
    nodes_[node].entry = static_cast<std::int32_t>(entries_.size());
    entries_.emplace_back();
  }
  return entries_[static_cast<std::size_t>(nodes_[node].entry)];
}

void ScriptedLM::add_next(const std::string& suffix, TokenId token) {
  if (token < 0 || static_cast<std::size_t>(token) >= vocab_.size()) {
    throw std::invalid_argument("token id " + std::to_string(token) + " outside the vocabulary");
  }
  Entry& e = entry(suffix);
  if (std::find(e.ranked.begin(), e.ranked.end(), token) == e.ranked.end()) e.ranked.push_back(token);
}

void ScriptedLM::add_scores(const std::string& suffix, ScoreVector scores) {
  if (scores.size() != vocab_.size()) {
    throw std::invalid_argument("scores for suffix \"" + suffix + "\" have the wrong length");
  }
  entry(suffix).scores = std::move(scores);
}

void ScriptedLM::add_script(const std::string& context, const std::string& text, bool eos) {
  // Every byte offset gets the longest token starting there, so a branch
  // that leaves this script at any byte still finds its continuation.
  const std::size_t window = vocab_.trie().max_depth();
  for (std::size_t i = 0; i < text.size(); ++i) {
    std::optional<TokenId> tok;
    for (std::size_t len = std::min(window, text.size() - i); len > 0 && !tok; --len) {
      tok = vocab_.find(text.substr(i, len));
    }
    if (!tok) throw std::invalid_argument("no token covers byte " + std::to_string(i) + " of the script");
    add_next(context + text.substr(0, i), *tok);
  }
  if (eos) add_next(context + text, vocab_.eos_id());
}

ScoreVector ScriptedLM::scores_for_text(std::string_view context) const {
  std::uint32_t node = 0;
  std::int32_t best = nodes_[0].entry;
  for (auto it = context.rbegin(); it != context.rend(); ++it) {
    auto found = nodes_[node].children.find(*it);
    if (found == nodes_[node].children.end()) break;
    node = found->second;
    if (nodes_[node].entry >= 0) best = nodes_[node].entry;
  }
  if (best < 0) return default_;
  const Entry& e = entries_[static_cast<std::size_t>(best)];
  ScoreVector s = e.scores ? *e.scores : ScoreVector(vocab_.size(), 0.0);
  double top = 0;
  for (double v : s) top = std::max(top, v);
  for (std::size_t r = 0; r < e.ranked.size(); ++r) {
    s[static_cast<std::size_t>(e.ranked[r])] = top + 100.0 - static_cast<double>(r);
  }
  return s;
}

ScoreVector ScriptedLM::scores(std::span<const TokenId> tokens) const {
  return scores_for_text(vocab_.detokenize(tokens));
}

ScriptedLM ScriptedLM::from_json_text(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("scripted model fixture is not JSON: ") + e.what());
  }
  try {
    auto tokens = j.at("vocab").get<std::vector<std::string>>();
    auto eos = j.value("eos_id", 0);
    std::set<std::string> have(tokens.begin(), tokens.end());
    const auto& entries = j.value("entries", nlohmann::json::array());
    for (const auto& e : entries) {
      if (!e.contains("script")) continue;
      for (char c : e.at("script").get<std::string>()) {
        if (have.insert(std::string(1, c)).second) tokens.emplace_back(1, c);
      }
    }
    Vocabulary vocab(tokens, eos);
    ScoreVector def;
    if (j.contains("default") && j.at("default").is_array()) def = j.at("default").get<ScoreVector>();
    ScriptedLM lm(std::move(vocab), std::move(def));

    auto token_of = [&](const nlohmann::json& t) -> TokenId {
      if (t.is_number_integer()) return t.get<TokenId>();
      auto id = lm.vocab_.find(t.get<std::string>());
      if (!id) throw std::invalid_argument("token \"" + t.get<std::string>() + "\" is not in the vocabulary");
      return *id;
    };
    for (const auto& e : entries) {
      if (e.contains("script")) {
        lm.add_script(e.value("context", ""), e.at("script").get<std::string>(), e.value("eos", true));
        continue;
      }
      const std::string suffix = e.at("suffix").get<std::string>();
      if (e.contains("next_token")) lm.add_next(suffix, token_of(e.at("next_token")));
      if (e.contains("ranked")) {
        for (const auto& t : e.at("ranked")) lm.add_next(suffix, token_of(t));
      }
      if (e.contains("scores")) {
        const auto& s = e.at("scores");
        if (s.is_array()) {
          lm.add_scores(suffix, s.get<ScoreVector>());
        } else {
          ScoreVector v(lm.vocab_.size(), 0.0);
          for (const auto& [tok, score] : s.items()) v[static_cast<std::size_t>(token_of(tok))] = score.get<double>();
          lm.add_scores(suffix, std::move(v));
        }
      }
    }
    return lm;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("malformed scripted model fixture: ") + e.what());
  }
}

// --------------------------------------------------------------- TM-backed

namespace {

Vocabulary tm_vocabulary(const tm::TuringMachine& m) {
  std::vector<std::string> tokens{"</s>"};
  for (char c : m.tape_alphabet()) tokens.emplace_back(1, c);
  for (auto& e : tm::enumerate_encodings(m)) tokens.push_back(std::move(e));
  return Vocabulary(std::move(tokens), 0);
}

}  // namespace

TMBackedLM::TMBackedLM(tm::TuringMachine machine, tm::StepBudget budget)
    : machine_(std::move(machine)), budget_(budget), vocab_(tm_vocabulary(machine_)) {
  // Without at least one step the input and output symbols would run
  // together in the context.
  if (machine_.halting(machine_.initial())) {
    throw tm::MachineError("the initial state of a machine-backed model must not be halting");
  }
  for (std::size_t i = 0; i < vocab_.size(); ++i) {
    auto id = static_cast<TokenId>(i);
    if (id == vocab_.eos_id()) continue;
    const std::string& t = vocab_.token(id);
    if (i <= machine_.tape_alphabet().size()) {
      symbol_ids_[t[0]] = id;
    } else {
      encoding_ids_[t] = id;
    }
  }
}

TokenId TMBackedLM::symbol_token(char c) const { return symbol_ids_.at(c); }
TokenId TMBackedLM::encoding_token(const std::string& encoding) const { return encoding_ids_.at(encoding); }

std::vector<TokenId> TMBackedLM::encode_input(std::string_view x) const {
  std::vector<TokenId> out;
  for (char c : x) out.push_back(symbol_token(c));
  return out;
}

std::shared_ptr<const std::vector<TokenId>> TMBackedLM::continuation_for(const std::string& x) const {
  std::lock_guard lock(mu_);
  auto it = runs_.find(x);
  if (it != runs_.end()) return it->second;
  std::shared_ptr<std::vector<TokenId>> cont;
  auto run = tm::tm_run(machine_, x, budget_);
  if (run.halted) {
    cont = std::make_shared<std::vector<TokenId>>();
    for (const auto& e : tm::trace_encodings(machine_, run)) cont->push_back(encoding_ids_.at(e));
    for (char c : run.output) cont->push_back(symbol_ids_.at(c));
    cont->push_back(vocab_.eos_id());
  }
  runs_.emplace(x, cont);
  return cont;
}

ScoreVector TMBackedLM::scores(std::span<const TokenId> tokens) const {
  ScoreVector s(vocab_.size(), 0.0);
  std::size_t i = 0;
  std::string x;
  const std::string& sigma = machine_.input_alphabet();
  for (; i < tokens.size() && tokens[i] != vocab_.eos_id(); ++i) {
    const std::string& t = vocab_.token(tokens[i]);
    if (t.size() != 1 || sigma.find(t[0]) == std::string::npos) break;
    x += t[0];
  }
  // Encodings, then the output, then EOS.
  auto cont = continuation_for(x);
  std::size_t rest = tokens.size() - i;
  if (!cont || rest >= cont->size() || !std::equal(tokens.begin() + static_cast<long>(i), tokens.end(), cont->begin())) {
    ++malformed_;
    return s;
  }
  s[static_cast<std::size_t>((*cont)[rest])] = 1.0;
  return s;
}

// ------------------------------------------------------------------ remote

std::string base64_encode(std::string_view bytes) {
  namespace b64 = boost::beast::detail::base64;
  std::string out(b64::encoded_size(bytes.size()), '\0');
  out.resize(b64::encode(out.data(), bytes.data(), bytes.size()));
  return out;
}

std::string base64_decode(std::string_view text) {
  namespace b64 = boost::beast::detail::base64;
  if (text.size() % 4 != 0) throw std::invalid_argument("invalid base64");
  std::string_view body = text;
  for (int pad = 0; pad < 2 && !body.empty() && body.back() == '='; ++pad) body.remove_suffix(1);
  std::string out(b64::decoded_size(text.size()), '\0');
  auto [written, read] = b64::decode(out.data(), text.data(), text.size());
  if (read < body.size()) throw std::invalid_argument("invalid base64");
  out.resize(written);
  return out;
}

namespace {

std::string describe(httplib::Error e) { return httplib::to_string(e); }

}  // namespace

RemoteLM::RemoteLM(std::string endpoint, std::chrono::milliseconds timeout) : timeout_(timeout) {
  std::string rest = endpoint;
  if (rest.rfind("http://", 0) == 0) {
    rest = rest.substr(7);
  } else if (rest.find("://") != std::string::npos) {
    throw RemoteError(RemoteError::Kind::kTransport, "only http:// endpoints are supported: " + endpoint);
  }
  if (auto slash = rest.find('/'); slash != std::string::npos) rest = rest.substr(0, slash);
  host_ = rest;
  if (auto colon = rest.rfind(':'); colon != std::string::npos) {
    host_ = rest.substr(0, colon);
    try {
      port_ = std::stoi(rest.substr(colon + 1));
    } catch (const std::exception&) {
      throw RemoteError(RemoteError::Kind::kTransport, "bad port in endpoint " + endpoint);
    }
  }

  nlohmann::json j;
  try {
    j = nlohmann::json::parse(get("/vocab"));
    std::vector<std::string> tokens;
    for (const auto& t : j.at("tokens")) tokens.push_back(base64_decode(t.get<std::string>()));
    vocab_ = Vocabulary(std::move(tokens), j.at("eos_id").get<TokenId>());
  } catch (const RemoteError&) {
    throw;
  } catch (const std::exception& e) {
    throw RemoteError(RemoteError::Kind::kSchemaMismatch, std::string("bad /vocab response: ") + e.what());
  }
}

std::string RemoteLM::get(const std::string& path) const {
  httplib::Client cli(host_, port_);
  cli.set_connection_timeout(timeout_);
  cli.set_read_timeout(timeout_);
  cli.set_write_timeout(timeout_);
  auto start = std::chrono::steady_clock::now();
  auto res = cli.Get(path);
  if (!res) {
    bool slow = std::chrono::steady_clock::now() - start >= timeout_;
    if (res.error() == httplib::Error::ConnectionTimeout || (res.error() == httplib::Error::Read && slow)) {
      throw RemoteError(RemoteError::Kind::kTimeout, "GET " + path + " timed out");
    }
    throw RemoteError(RemoteError::Kind::kTransport, "GET " + path + ": " + describe(res.error()));
  }
  if (res->status != 200) {
    throw RemoteError(RemoteError::Kind::kTransport, "GET " + path + " returned HTTP " + std::to_string(res->status));
  }
  return res->body;
}

std::string RemoteLM::post(const std::string& path, const std::string& body) const {
  httplib::Client cli(host_, port_);
  cli.set_connection_timeout(timeout_);
  cli.set_read_timeout(timeout_);
  cli.set_write_timeout(timeout_);
  auto start = std::chrono::steady_clock::now();
  auto res = cli.Post(path, body, "application/json");
  if (!res) {
    bool slow = std::chrono::steady_clock::now() - start >= timeout_;
    if (res.error() == httplib::Error::ConnectionTimeout || (res.error() == httplib::Error::Read && slow)) {
      throw RemoteError(RemoteError::Kind::kTimeout, "POST " + path + " timed out");
    }
    throw RemoteError(RemoteError::Kind::kTransport, "POST " + path + ": " + describe(res.error()));
  }
  if (res->status != 200) {
    throw RemoteError(RemoteError::Kind::kTransport, "POST " + path + " returned HTTP " + std::to_string(res->status));
  }
  return res->body;
}

ScoreVector RemoteLM::scores(std::span<const TokenId> tokens) const {
  nlohmann::json req = {{"token_ids", std::vector<TokenId>(tokens.begin(), tokens.end())}};
  std::string body = post("/score", req.dump());
  ScoreVector s;
  try {
    s = nlohmann::json::parse(body).at("scores").get<ScoreVector>();
  } catch (const nlohmann::json::exception& e) {
    throw RemoteError(RemoteError::Kind::kSchemaMismatch, std::string("bad /score response: ") + e.what());
  }
  if (s.size() != vocab_.size()) {
    throw RemoteError(RemoteError::Kind::kVocabMismatch, "server returned " + std::to_string(s.size()) +
                                                             " scores for a vocabulary of " +
                                                             std::to_string(vocab_.size()));
  }
  return s;
}

std::unique_ptr<LanguageModel> make_language_model(const std::string& spec) {
  auto colon = spec.find(':');
  if (colon == std::string::npos) throw std::invalid_argument("model spec needs a kind prefix: " + spec);
  std::string kind = spec.substr(0, colon);
  std::string arg = spec.substr(colon + 1);
  if (kind == "scripted") return std::make_unique<ScriptedLM>(ScriptedLM::from_json_text(read_file(arg)));
  if (kind == "tm") {
    if (bundled_resource("machines/" + arg + ".json")) {
      return std::make_unique<TMBackedLM>(tm::TuringMachine::bundled(arg));
    }
    return std::make_unique<TMBackedLM>(tm::TuringMachine::from_json_text(read_file(arg)));
  }
  if (kind == "remote") return std::make_unique<RemoteLM>(arg);
  throw std::invalid_argument("unknown model kind '" + kind + "'");
}

}  // namespace crane
