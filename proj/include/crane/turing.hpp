// Multi-tape Turing machines with a read-only input tape, k work tapes and
// an output tape; single-byte symbols.
//
// Machine files are JSON:
//
//   {"name": "parity", "input_alphabet": ["0","1"], "tape_alphabet": ["0","1","_"],
//    "blank": "_", "work_tapes": 0, "states": [...], "initial": "even",
//    "halting": ["halt"],
//    "transitions": [{"state": "even", "read": ["0","*"], "next": "even",
//                     "write": ["_"], "move": [1, 0]}, ...]}
//
// `read` lists the symbols under the input, work and output heads; `*`
// matches any symbol and the first matching row wins. `write` covers the
// work and output tapes; `*` writes back the symbol that was read. Moves are
// -1, 0 or +1 for every tape including the input.
#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "crane/earley.hpp"
#include "crane/grammar.hpp"

namespace crane::tm {

class MachineError : public std::runtime_error {
 public:
  explicit MachineError(const std::string& what) : std::runtime_error(what) {}
};

struct Transition {
  std::string next;
  /// One symbol per work tape, then the output tape.
  std::string write;
  /// One entry per tape: input, work tapes, output.
  std::vector<int> move;

  friend bool operator==(const Transition&, const Transition&) = default;
};

class TuringMachine {
 public:
  static TuringMachine from_json_text(std::string_view text);
  /// A machine bundled with the library: "copy", "parity" or "unary_increment".
  static TuringMachine bundled(std::string_view name);

  const std::string& name() const { return name_; }
  const std::string& input_alphabet() const { return input_alphabet_; }
  const std::string& tape_alphabet() const { return tape_alphabet_; }
  char blank() const { return blank_; }
  int work_tapes() const { return work_tapes_; }
  std::size_t num_tapes() const { return static_cast<std::size_t>(work_tapes_) + 2; }
  const std::vector<std::string>& states() const { return states_; }
  const std::string& initial() const { return initial_; }
  bool halting(const std::string& state) const { return halting_.count(state) != 0; }

  /// delta(q, symbols under the heads). Throws MachineError for halting q.
  const Transition& delta(const std::string& state, std::string_view read) const;
  /// Expanded transition table keyed by (state, read symbols).
  const std::map<std::pair<std::string, std::string>, Transition>& table() const { return table_; }

 private:
  std::string name_;
  std::string input_alphabet_;
  std::string tape_alphabet_;
  char blank_ = '_';
  int work_tapes_ = 0;
  std::vector<std::string> states_;
  std::string initial_;
  std::set<std::string> halting_;
  std::map<std::pair<std::string, std::string>, Transition> table_;
};

struct Configuration {
  std::string state;
  /// Sparse tapes: input, work tapes, output. Missing cells are blank.
  std::vector<std::map<long, char>> tapes;
  std::vector<long> heads;
  std::size_t step = 0;

  char read(std::size_t tape, char blank) const;
  friend bool operator==(const Configuration&, const Configuration&) = default;
};

struct StepBudget {
  std::size_t max_steps = 10000;
};

/// Input on tape 0 from index 0, everything else blank, heads at 0.
Configuration initial_configuration(const TuringMachine& m, std::string_view x);

/// Applies delta once. Throws MachineError on a halted configuration.
Configuration tm_step(const TuringMachine& m, const Configuration& c);

struct RunResult {
  bool halted = false;
  /// Output tape from its head up to the first blank (empty unless halted).
  std::string output;
  /// Initial configuration followed by one entry per step.
  std::vector<Configuration> trace;

  std::size_t steps() const { return trace.empty() ? 0 : trace.size() - 1; }
};

/// Runs until a halting state or the budget; `halted` is false when the
/// budget was exhausted. Throws MachineError if x is not over the input
/// alphabet.
RunResult tm_run(const TuringMachine& m, std::string_view x, StepBudget budget);

/// Token for the step prev -> next: "[q;w1,..,wk+1;d0,..,dk+1]" with the
/// state entered, the symbols written and the head moves as -, 0 or +.
/// Throws MachineError unless next = tm_step(prev).
std::string encode_config(const TuringMachine& m, const Configuration& prev, const Configuration& next);

/// Every distinct encoding delta can produce, in table order.
std::vector<std::string> enumerate_encodings(const TuringMachine& m);

/// Encodings of consecutive trace steps.
std::vector<std::string> trace_encodings(const TuringMachine& m, const RunResult& run);

struct ReasoningReport {
  bool passed = false;
  std::string input;
  std::string expected;
  std::string produced;
  std::size_t machine_steps = 0;
  std::size_t reasoning_tokens = 0;
  std::size_t output_tokens = 0;
  std::string message;
};

/// Constrained decoding under Ga = R_M g with the machine-backed model,
/// compared against a direct run of the machine.
ReasoningReport demo_reasoning(const TuringMachine& m, const GrammarSpec& g, std::string_view x,
                         StepBudget budget);

/// demo_reasoning with Ga and the model built once for many inputs. run() is
/// safe to call from several threads.
class ReasoningDemo {
 public:
  ReasoningDemo(TuringMachine m, GrammarSpec g, StepBudget budget);
  ReasoningReport run(std::string_view x) const;

 private:
  TuringMachine machine_;
  GrammarSpec output_;
  StepBudget budget_;
  std::vector<std::string> encodings_;
  std::shared_ptr<const earley::CompiledGrammar> ga_;
  std::shared_ptr<const earley::CompiledGrammar> output_compiled_;
};

/// Output grammar used with a bundled machine.
GrammarSpec output_grammar(std::string_view machine_name);

}  // namespace crane::tm
