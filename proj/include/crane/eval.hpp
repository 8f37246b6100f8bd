// Evaluation of generated answers: extraction, grammar membership,
// functional equivalence by random testing, and dataset runs.
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

#include <boost/multiprecision/cpp_int.hpp>

#include "crane/decoder.hpp"
#include "crane/grammar.hpp"

namespace crane::eval {

using Rational = boost::multiprecision::cpp_rational;

/// Parse failure, unbound variable, or no assignment that avoids a zero
/// divisor. Distinct from a "not equivalent" answer.
class EvaluationError : public std::runtime_error {
 public:
  explicit EvaluationError(const std::string& what) : std::runtime_error(what) {}
};

class DivisionByZero : public EvaluationError {
 public:
  DivisionByZero() : EvaluationError("division by zero") {}
};

/// Arithmetic answer expression: + - * / // % with unary minus, int(...),
/// decimal literals and variables.
struct Expr {
  enum class Kind { kNumber, kVariable, kNeg, kInt, kAdd, kSub, kMul, kDiv, kFloorDiv, kMod };
  Kind kind;
  Rational value;
  std::string name;
  std::shared_ptr<const Expr> lhs, rhs;
};
using ExprPtr = std::shared_ptr<const Expr>;

ExprPtr parse_expression(std::string_view text);
/// Fully parenthesized rendering; equal strings mean equal trees.
std::string canonical(const Expr& e);
std::set<std::string> free_variables(const Expr& e);

/// `/` is exact, `//` floors, `%` takes the sign of the divisor and int()
/// truncates toward zero. Throws DivisionByZero or EvaluationError.
Rational evaluate(const Expr& e, const std::map<std::string, Rational>& env);

struct EquivalenceOracle {
  std::size_t trials = 100;
  std::int64_t min_value = -100;
  std::int64_t max_value = 100;
  std::uint64_t seed = 0;
  /// Draws per trial before giving up on finding a non-zero divisor.
  std::size_t max_resamples = 100;
};

/// True when both expressions agree on `trials` random integer assignments
/// to `vars` (or have the same canonical form). Can wrongly accept, never
/// wrongly reject. Throws EvaluationError if either does not parse or uses
/// a variable outside `vars`.
bool check_equivalence(std::string_view a, std::string_view b, const EquivalenceOracle& oracle,
                       const std::set<std::string>& vars);

/// Interior of the last complete s1 ... s2 block.
std::optional<std::string> extract_final_answer(std::string_view output, std::string_view s1,
                                                std::string_view s2);

/// s1 expr s2 is in L(s1 g s2).
bool check_parse(std::string_view expr, const GrammarSpec& g, std::string_view s1 = "<<",
                 std::string_view s2 = ">>");

/// Syntactic check of a whole FOL program against the Prover9 grammar.
bool check_prover9_compiles(std::string_view output, const GrammarSpec& g);

struct TaskInstance {
  std::string id;
  /// Question text, inserted for {question} in the prompt template.
  std::string question;
  std::vector<std::string> variables;
  std::string ground_truth;
  /// "gsm", "prover9" or a grammar file path.
  std::string grammar = "gsm";
};

/// One JSON object per non-blank line:
///   {"id", "question", "variables": [...], "answer", "grammar"?}
std::vector<TaskInstance> parse_dataset_jsonl(std::string_view text);

enum class Method { kCrane, kConstrained, kUnconstrained, kUnconstrainedNoCot };
Method parse_method(std::string_view name);
const char* to_string(Method m);

/// Prompt for `question` under the method's template ("gsm" and custom
/// grammars use the GSM prompts; "prover9" the FOLIO prompt).
std::string render_prompt(Method m, const std::string& grammar_id, std::string_view question);

struct InstanceRecord {
  std::string id;
  std::optional<std::string> extracted;
  bool parsed = false;
  bool equivalent = false;
  std::size_t token_count = 0;
  std::string error;
};

struct EvalReport {
  Method method = Method::kCrane;
  std::vector<InstanceRecord> records;
  double accuracy_pct = 0;
  double parse_pct = 0;
  double avg_tokens = 0;

  std::string to_json() const;
};

struct EvalConfig {
  DecodeConfig decode;
  EquivalenceOracle oracle;
  /// 0 picks the hardware concurrency.
  std::size_t threads = 0;
};

/// Generates, extracts and scores every instance. Per-instance failures are
/// recorded and the run continues.
EvalReport run_eval(const std::vector<TaskInstance>& dataset, Method method, const LanguageModel& lm,
                    const EvalConfig& cfg);

}  // namespace crane::eval
