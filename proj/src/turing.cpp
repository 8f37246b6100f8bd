#include "crane/turing.hpp"

#include <algorithm>
#include <json.hpp>

#include "crane/decoder.hpp"
#include "crane/lm_adapters.hpp"
#include "crane/resources.hpp"

namespace crane::tm {

namespace {

char symbol(const nlohmann::json& j, const std::string& where) {
  if (!j.is_string() || j.get<std::string>().size() != 1) {
    throw MachineError(where + ": symbols must be one-character strings");
  }
  return j.get<std::string>()[0];
}

}  // namespace

TuringMachine TuringMachine::from_json_text(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw MachineError(std::string("machine file is not JSON: ") + e.what());
  }
  TuringMachine m;
  try {
    m.name_ = j.value("name", "");
    for (const auto& s : j.at("input_alphabet")) m.input_alphabet_ += symbol(s, "input_alphabet");
    for (const auto& s : j.at("tape_alphabet")) m.tape_alphabet_ += symbol(s, "tape_alphabet");
    m.blank_ = symbol(j.at("blank"), "blank");
    m.work_tapes_ = j.at("work_tapes").get<int>();
    m.states_ = j.at("states").get<std::vector<std::string>>();
    m.initial_ = j.at("initial").get<std::string>();
    for (const auto& s : j.at("halting")) m.halting_.insert(s.get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw MachineError(std::string("malformed machine: ") + e.what());
  }

  const auto& gamma = m.tape_alphabet_;
  auto in_gamma = [&](char c) { return gamma.find(c) != std::string::npos; };
  auto is_state = [&](const std::string& q) {
    return std::find(m.states_.begin(), m.states_.end(), q) != m.states_.end();
  };
  if (m.work_tapes_ < 0) throw MachineError("negative number of work tapes");
  if (!in_gamma(m.blank_)) throw MachineError("blank is not in the tape alphabet");
  if (m.input_alphabet_.find(m.blank_) != std::string::npos) throw MachineError("blank is in the input alphabet");
  for (char c : m.input_alphabet_) {
    if (!in_gamma(c)) throw MachineError(std::string("input symbol '") + c + "' is not in the tape alphabet");
  }
  if (in_gamma('*')) throw MachineError("'*' is reserved as the wildcard");
  if (!is_state(m.initial_)) throw MachineError("initial state '" + m.initial_ + "' is not a state");
  for (const auto& q : m.halting_) {
    if (!is_state(q)) throw MachineError("halting state '" + q + "' is not a state");
  }

  struct Row {
    std::string state;
    std::string read;
    Transition t;
  };
  std::vector<Row> rows;
  const std::size_t tapes = m.num_tapes();
  for (const auto& r : j.at("transitions")) {
    Row row;
    try {
      row.state = r.at("state").get<std::string>();
      for (const auto& s : r.at("read")) row.read += s.get<std::string>() == "*" ? '*' : symbol(s, "read");
      row.t.next = r.at("next").get<std::string>();
      for (const auto& s : r.at("write")) row.t.write += s.get<std::string>() == "*" ? '*' : symbol(s, "write");
      row.t.move = r.at("move").get<std::vector<int>>();
    } catch (const nlohmann::json::exception& e) {
      throw MachineError(std::string("malformed transition: ") + e.what());
    }
    if (!is_state(row.state) || !is_state(row.t.next)) throw MachineError("transition names an unknown state");
    if (m.halting(row.state)) throw MachineError("transition out of halting state '" + row.state + "'");
    if (row.read.size() != tapes || row.t.write.size() != tapes - 1 || row.t.move.size() != tapes) {
      throw MachineError("transition arity does not match " + std::to_string(m.work_tapes_) + " work tapes");
    }
    for (char c : row.read + row.t.write) {
      if (c != '*' && !in_gamma(c)) throw MachineError(std::string("symbol '") + c + "' not in the tape alphabet");
    }
    for (int d : row.t.move) {
      if (d < -1 || d > 1) throw MachineError("moves must be -1, 0 or +1");
    }
    rows.push_back(std::move(row));
  }

  // Expand wildcards over every read tuple and check that delta is total.
  for (const auto& q : m.states_) {
    if (m.halting(q)) continue;
    std::string read(tapes, gamma[0]);
    std::vector<std::size_t> idx(tapes, 0);
    while (true) {
      for (std::size_t t = 0; t < tapes; ++t) read[t] = gamma[idx[t]];
      const Row* hit = nullptr;
      for (const auto& row : rows) {
        if (row.state != q) continue;
        bool ok = true;
        for (std::size_t t = 0; t < tapes && ok; ++t) ok = row.read[t] == '*' || row.read[t] == read[t];
        if (ok) {
          hit = &row;
          break;
        }
      }
      if (!hit) throw MachineError("delta is undefined for state '" + q + "' reading \"" + read + "\"");
      Transition tr = hit->t;
      for (std::size_t w = 0; w < tr.write.size(); ++w) {
        if (tr.write[w] == '*') tr.write[w] = read[w + 1];
      }
      m.table_.emplace(std::make_pair(q, read), std::move(tr));
      std::size_t t = 0;
      while (t < tapes && ++idx[t] == gamma.size()) idx[t++] = 0;
      if (t == tapes) break;
    }
  }
  return m;
}

TuringMachine TuringMachine::bundled(std::string_view name) {
  auto text = bundled_resource("machines/" + std::string(name) + ".json");
  if (!text) throw MachineError("no bundled machine named '" + std::string(name) + "'");
  return from_json_text(*text);
}

const Transition& TuringMachine::delta(const std::string& state, std::string_view read) const {
  if (halting(state)) throw MachineError("no transition out of halting state '" + state + "'");
  auto it = table_.find({state, std::string(read)});
  if (it == table_.end()) throw MachineError("delta undefined for '" + state + "' reading \"" + std::string(read) + "\"");
  return it->second;
}

char Configuration::read(std::size_t tape, char blank) const {
  auto it = tapes[tape].find(heads[tape]);
  return it == tapes[tape].end() ? blank : it->second;
}

Configuration initial_configuration(const TuringMachine& m, std::string_view x) {
  for (char c : x) {
    if (m.input_alphabet().find(c) == std::string::npos) {
      throw MachineError(std::string("input symbol '") + c + "' is not in the input alphabet");
    }
  }
  Configuration c;
  c.state = m.initial();
  c.tapes.resize(m.num_tapes());
  c.heads.assign(m.num_tapes(), 0);
  for (std::size_t i = 0; i < x.size(); ++i) c.tapes[0][static_cast<long>(i)] = x[i];
  return c;
}

Configuration tm_step(const TuringMachine& m, const Configuration& c) {
  if (m.halting(c.state)) throw MachineError("stepping a halted configuration");
  std::string read;
  for (std::size_t t = 0; t < m.num_tapes(); ++t) read += c.read(t, m.blank());
  const Transition& tr = m.delta(c.state, read);
  Configuration n = c;
  n.state = tr.next;
  for (std::size_t w = 0; w < tr.write.size(); ++w) {
    auto& tape = n.tapes[w + 1];
    long h = n.heads[w + 1];
    // Blank cells are left out so equal configurations compare equal.
    if (tr.write[w] == m.blank()) {
      tape.erase(h);
    } else {
      tape[h] = tr.write[w];
    }
  }
  for (std::size_t t = 0; t < m.num_tapes(); ++t) n.heads[t] += tr.move[t];
  n.step = c.step + 1;
  return n;
}

RunResult tm_run(const TuringMachine& m, std::string_view x, StepBudget budget) {
  RunResult r;
  r.trace.push_back(initial_configuration(m, x));
  while (!m.halting(r.trace.back().state)) {
    if (r.steps() >= budget.max_steps) return r;
    r.trace.push_back(tm_step(m, r.trace.back()));
  }
  r.halted = true;
  const Configuration& last = r.trace.back();
  const std::size_t out = m.num_tapes() - 1;
  for (long h = last.heads[out];; ++h) {
    auto it = last.tapes[out].find(h);
    if (it == last.tapes[out].end()) break;
    r.output += it->second;
  }
  return r;
}

namespace {

std::string encode(const std::string& state, std::string_view written, const std::vector<int>& moves) {
  std::string s = "[" + state + ";";
  for (std::size_t i = 0; i < written.size(); ++i) {
    if (i) s += ',';
    s += written[i];
  }
  s += ';';
  for (std::size_t i = 0; i < moves.size(); ++i) {
    if (i) s += ',';
    s += moves[i] < 0 ? '-' : moves[i] > 0 ? '+' : '0';
  }
  return s + "]";
}

}  // namespace

std::string encode_config(const TuringMachine& m, const Configuration& prev, const Configuration& next) {
  if (m.halting(prev.state) || !(tm_step(m, prev) == next)) {
    throw MachineError("configurations are not consecutive");
  }
  std::string written;
  std::vector<int> moves;
  for (std::size_t t = 0; t < m.num_tapes(); ++t) {
    moves.push_back(static_cast<int>(next.heads[t] - prev.heads[t]));
  }
  for (std::size_t t = 1; t < m.num_tapes(); ++t) {
    auto it = next.tapes[t].find(prev.heads[t]);
    written += it == next.tapes[t].end() ? m.blank() : it->second;
  }
  return encode(next.state, written, moves);
}

std::vector<std::string> enumerate_encodings(const TuringMachine& m) {
  std::vector<std::string> out;
  for (const auto& [_, t] : m.table()) {
    std::string e = encode(t.next, t.write, t.move);
    if (std::find(out.begin(), out.end(), e) == out.end()) out.push_back(e);
  }
  return out;
}

std::vector<std::string> trace_encodings(const TuringMachine& m, const RunResult& run) {
  std::vector<std::string> out;
  for (std::size_t i = 1; i < run.trace.size(); ++i) out.push_back(encode_config(m, run.trace[i - 1], run.trace[i]));
  return out;
}

GrammarSpec output_grammar(std::string_view machine_name) {
  if (machine_name == "parity") return parse_grammar_text("start: \"0\" | \"1\"\n");
  if (machine_name == "copy") return parse_grammar_text("start: BIT*\nBIT: \"0\" | \"1\"\n");
  if (machine_name == "unary_increment") return parse_grammar_text("start: \"1\"+\n");
  throw MachineError("no output grammar for machine '" + std::string(machine_name) + "'");
}

ReasoningDemo::ReasoningDemo(TuringMachine m, GrammarSpec g, StepBudget budget)
    : machine_(std::move(m)), output_(std::move(g)), budget_(budget), encodings_(enumerate_encodings(machine_)) {
  ga_ = compile(build_reasoning_grammar(output_, encodings_));
  output_compiled_ = compile(output_);
}

ReasoningReport ReasoningDemo::run(std::string_view x) const {
  ReasoningReport rep;
  rep.input = std::string(x);
  RunResult run = tm_run(machine_, x, budget_);
  if (!run.halted) {
    rep.message = "machine did not halt within " + std::to_string(budget_.max_steps) + " steps";
    return rep;
  }
  rep.machine_steps = run.steps();
  for (const auto& e : trace_encodings(machine_, run)) rep.expected += e;
  rep.expected += run.output;

  // A fresh model per input keeps its replay cache small.
  TMBackedLM lm(machine_, budget_);
  const Vocabulary& vocab = lm.vocabulary();
  DecodeConfig cfg;
  cfg.max_new_tokens = run.steps() + run.output.size() + 2;
  GenerationResult gen;
  try {
    gen = constrained_generate(lm.encode_input(x), lm, ga_, cfg);
  } catch (const NoViableToken& e) {
    rep.message = e.what();
    return rep;
  }
  rep.produced = gen.text(vocab);

  // Split the generated tokens into the reasoning prefix and the answer.
  std::size_t i = 0;
  std::string answer;
  for (; i < gen.tokens.size(); ++i) {
    if (gen.tokens[i] == vocab.eos_id()) break;
    const std::string& tok = vocab.token(gen.tokens[i]);
    if (std::find(encodings_.begin(), encodings_.end(), tok) == encodings_.end()) break;
  }
  rep.reasoning_tokens = i;
  for (; i < gen.tokens.size(); ++i) {
    if (gen.tokens[i] == vocab.eos_id()) continue;
    answer += vocab.token(gen.tokens[i]);
    ++rep.output_tokens;
  }

  if (!gen.stopped_on_eos) {
    rep.message = "generation did not end";
  } else if (rep.produced != rep.expected) {
    rep.message = "produced \"" + rep.produced + "\", expected \"" + rep.expected + "\"";
  } else if (rep.reasoning_tokens != run.steps()) {
    rep.message = "reasoning prefix has " + std::to_string(rep.reasoning_tokens) + " encodings, machine took " +
                  std::to_string(run.steps()) + " steps";
  } else if (!is_member(output_compiled_, answer)) {
    rep.message = "answer \"" + answer + "\" is not in the output grammar";
  } else {
    rep.passed = true;
  }
  return rep;
}

ReasoningReport demo_reasoning(const TuringMachine& m, const GrammarSpec& g, std::string_view x, StepBudget budget) {
  return ReasoningDemo(m, g, budget).run(x);
}

}  // namespace crane::tm
