// Independent oracles and fixtures shared by the unit and acceptance tests.
#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "crane/decoder.hpp"
#include "crane/grammar.hpp"
#include "crane/recognizer.hpp"
#include "crane/token_mask.hpp"
#include "crane/vocabulary.hpp"

namespace testsupport {

/// Every string of L(g) up to `max_len` bytes, by breadth-first leftmost
/// derivation. Terminals must be literals.
inline std::set<std::string> enumerate_language(const crane::GrammarSpec& g, std::size_t max_len) {
  using crane::SymbolRef;
  // Minimum yield length of each nonterminal.
  std::map<std::string, std::size_t> min_len;
  const std::size_t inf = 1u << 30;
  for (const auto& nt : g.nonterminals()) min_len[nt] = inf;
  auto sym_min = [&](const SymbolRef& s) {
    return s.is_terminal() ? g.terminal(s.name).literal->size() : min_len[s.name];
  };
  for (bool changed = true; changed;) {
    changed = false;
    for (const auto& p : g.productions()) {
      std::size_t total = 0;
      for (const auto& s : p.rhs) total = std::min(inf, total + sym_min(s));
      if (total < min_len[p.lhs]) {
        min_len[p.lhs] = total;
        changed = true;
      }
    }
  }

  struct Form {
    std::string prefix;
    std::vector<SymbolRef> rest;
    bool operator<(const Form& o) const {
      return std::tie(prefix, rest) < std::tie(o.prefix, o.rest);
    }
  };
  std::set<std::string> out;
  std::set<Form> seen;
  std::vector<Form> queue{{"", {SymbolRef::nonterminal(g.start())}}};
  const std::size_t max_symbols = 2 * max_len + 8;
  while (!queue.empty()) {
    Form f = std::move(queue.back());
    queue.pop_back();
    std::size_t i = 0;
    while (i < f.rest.size() && f.rest[i].is_terminal()) f.prefix += *g.terminal(f.rest[i++].name).literal;
    f.rest.erase(f.rest.begin(), f.rest.begin() + static_cast<long>(i));
    std::size_t need = f.prefix.size();
    for (const auto& s : f.rest) need = std::min(inf, need + sym_min(s));
    if (need > max_len || f.rest.size() > max_symbols) continue;
    if (!seen.insert(f).second) continue;
    if (f.rest.empty()) {
      out.insert(f.prefix);
      continue;
    }
    for (const auto* p : g.productions_of(f.rest.front().name)) {
      Form next{f.prefix, p->rhs};
      next.rest.insert(next.rest.end(), f.rest.begin() + 1, f.rest.end());
      queue.push_back(std::move(next));
    }
  }
  return out;
}

/// The mask by definition: advance a copy of the state over every token.
inline crane::MaskBits naive_mask(const crane::RecognizerState& state, const crane::Vocabulary& vocab) {
  crane::MaskBits m(vocab.size());
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    auto id = static_cast<crane::TokenId>(i);
    if (id == vocab.eos_id()) {
      m.set(i, state.complete());
    } else {
      m.set(i, !state.advance(vocab.token(id)).dead());
    }
  }
  return m;
}

/// Shortest-first search for an extension of at most `bound` bytes over
/// `alphabet` that makes the state complete.
inline std::optional<std::string> find_completion(const crane::RecognizerState& state,
                                                  const std::string& alphabet, std::size_t bound) {
  if (state.complete()) return std::string();
  struct Node {
    crane::RecognizerState st;
    std::string text;
  };
  for (std::size_t depth = 1; depth <= bound; ++depth) {
    std::vector<Node> stack{{state, ""}};
    while (!stack.empty()) {
      Node n = std::move(stack.back());
      stack.pop_back();
      for (char c : alphabet) {
        crane::RecognizerState next = n.st.advance(std::string(1, c));
        if (next.dead()) continue;
        std::string text = n.text + c;
        if (next.complete()) return text;
        if (text.size() < depth) stack.push_back({std::move(next), std::move(text)});
      }
    }
  }
  return std::nullopt;
}

/// Vocabulary of `size` tokens: EOS at id 0, every printable ASCII byte plus
/// newline, the given pieces, then random substrings of the samples.
inline crane::Vocabulary synthetic_vocab(const std::vector<std::string>& pieces,
                                         const std::vector<std::string>& samples, std::size_t size,
                                         std::uint64_t seed) {
  std::vector<std::string> tokens{"<eos>"};
  std::set<std::string> have;
  auto add = [&](const std::string& t) {
    if (!t.empty() && tokens.size() < size && have.insert(t).second) tokens.push_back(t);
  };
  for (int c = 32; c < 127; ++c) add(std::string(1, static_cast<char>(c)));
  add("\n");
  for (const auto& p : pieces) add(p);
  std::mt19937_64 rng(seed);
  for (int guard = 0; tokens.size() < size && guard < 1000000; ++guard) {
    const auto& s = samples[rng() % samples.size()];
    std::size_t a = rng() % s.size();
    std::size_t len = 2 + rng() % 7;
    add(s.substr(a, len));
  }
  return crane::Vocabulary(tokens, 0);
}

/// Direct interpretation of a machine file: rows are matched in order on
/// every step, no table expansion.
struct NaiveRun {
  bool halted = false;
  std::string output;
  std::size_t steps = 0;
};

inline NaiveRun naive_tm_run(const std::string& machine_json, const std::string& x, std::size_t max_steps) {
  auto j = nlohmann::json::parse(machine_json);
  const char blank = j["blank"].get<std::string>()[0];
  const std::size_t tapes = j["work_tapes"].get<std::size_t>() + 2;
  std::set<std::string> halting;
  for (const auto& h : j["halting"]) halting.insert(h.get<std::string>());
  std::vector<std::unordered_map<long, char>> tape(tapes);
  std::vector<long> head(tapes, 0);
  for (std::size_t i = 0; i < x.size(); ++i) tape[0][static_cast<long>(i)] = x[i];
  auto at = [&](std::size_t t) {
    auto it = tape[t].find(head[t]);
    return it == tape[t].end() ? blank : it->second;
  };
  std::string state = j["initial"].get<std::string>();
  NaiveRun r;
  while (!halting.count(state)) {
    if (r.steps == max_steps) return r;
    const nlohmann::json* row = nullptr;
    for (const auto& cand : j["transitions"]) {
      if (cand["state"] != state) continue;
      bool ok = true;
      for (std::size_t t = 0; t < tapes && ok; ++t) {
        std::string want = cand["read"][t].get<std::string>();
        ok = want == "*" || want[0] == at(t);
      }
      if (ok) {
        row = &cand;
        break;
      }
    }
    if (!row) throw std::runtime_error("naive simulator: no transition");
    for (std::size_t t = 1; t < tapes; ++t) {
      std::string w = (*row)["write"][t - 1].get<std::string>();
      if (w != "*") tape[t][head[t]] = w[0];
    }
    for (std::size_t t = 0; t < tapes; ++t) head[t] += (*row)["move"][t].get<long>();
    state = (*row)["next"].get<std::string>();
    ++r.steps;
  }
  r.halted = true;
  const std::size_t out = tapes - 1;
  for (long h = head[out];; ++h) {
    auto it = tape[out].find(h);
    if (it == tape[out].end() || it->second == blank) break;
    r.output += it->second;
  }
  return r;
}

/// Inclusive index ranges of consecutive masked steps.
inline std::vector<std::pair<std::size_t, std::size_t>> masked_spans(const std::vector<crane::StepRecord>& steps) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (const auto& s : steps) {
    if (s.mode != crane::StepMode::kMasked) continue;
    if (!out.empty() && out.back().second + 1 == s.index) {
      out.back().second = s.index;
    } else {
      out.emplace_back(s.index, s.index);
    }
  }
  return out;
}

/// Random arithmetic expression over `vars` in the answer syntax.
inline std::string random_expression(std::mt19937_64& rng, const std::vector<std::string>& vars, int depth) {
  auto pick = [&](std::size_t n) { return static_cast<std::size_t>(rng() % n); };
  if (depth == 0 || pick(3) == 0) {
    if (pick(4) == 0) return std::to_string(1 + pick(99));
    return vars[pick(vars.size())];
  }
  static const char* ops[] = {" + ", " - ", " * ", " // ", " % ", " / "};
  std::string lhs = random_expression(rng, vars, depth - 1);
  std::string rhs = random_expression(rng, vars, depth - 1);
  switch (pick(4)) {
    case 0:
      return "(" + lhs + ops[pick(6)] + rhs + ")";
    case 1:
      return "int(" + lhs + ")";
    default:
      return lhs + ops[pick(6)] + rhs;
  }
}

}  // namespace testsupport
