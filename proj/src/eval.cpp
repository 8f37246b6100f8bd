#include "crane/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <json.hpp>
#include <random>
#include <sstream>
#include <thread>

#include "crane/recognizer.hpp"
#include "crane/resources.hpp"

namespace crane::eval {

namespace {

using boost::multiprecision::cpp_int;

ExprPtr make(Expr::Kind k, ExprPtr lhs = nullptr, ExprPtr rhs = nullptr) {
  auto e = std::make_shared<Expr>();
  e->kind = k;
  e->lhs = std::move(lhs);
  e->rhs = std::move(rhs);
  return e;
}

class Parser {
 public:
  explicit Parser(std::string_view text) : s_(text) {}

  ExprPtr parse() {
    ExprPtr e = expr();
    skip();
    if (i_ != s_.size()) fail("unexpected '" + std::string(1, s_[i_]) + "'");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw EvaluationError("cannot parse \"" + std::string(s_) + "\" at offset " + std::to_string(i_) + ": " + what);
  }
  void skip() {
    while (i_ < s_.size() && s_[i_] == ' ') ++i_;
  }
  bool eat(std::string_view tok) {
    skip();
    if (s_.substr(i_, tok.size()) != tok) return false;
    i_ += tok.size();
    return true;
  }

  ExprPtr expr() {
    ExprPtr e = term();
    while (true) {
      if (eat("+")) {
        e = make(Expr::Kind::kAdd, e, term());
      } else if (eat("-")) {
        e = make(Expr::Kind::kSub, e, term());
      } else {
        return e;
      }
    }
  }

  ExprPtr term() {
    ExprPtr e = factor();
    while (true) {
      if (eat("*")) {
        e = make(Expr::Kind::kMul, e, factor());
      } else if (eat("//")) {
        e = make(Expr::Kind::kFloorDiv, e, factor());
      } else if (eat("/")) {
        e = make(Expr::Kind::kDiv, e, factor());
      } else if (eat("%")) {
        e = make(Expr::Kind::kMod, e, factor());
      } else {
        return e;
      }
    }
  }

  ExprPtr factor() {
    if (eat("-")) return make(Expr::Kind::kNeg, factor());
    if (eat("(")) {
      ExprPtr e = expr();
      if (!eat(")")) fail("expected ')'");
      return e;
    }
    skip();
    if (i_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[i_]))) return number();
    if (i_ < s_.size() && (std::isalpha(static_cast<unsigned char>(s_[i_])) || s_[i_] == '_')) {
      std::size_t start = i_;
      while (i_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[i_])) || s_[i_] == '_')) ++i_;
      std::string name(s_.substr(start, i_ - start));
      if (name == "int") {
        if (!eat("(")) fail("expected '(' after int");
        ExprPtr e = expr();
        if (!eat(")")) fail("expected ')'");
        return make(Expr::Kind::kInt, e);
      }
      auto e = std::make_shared<Expr>();
      e->kind = Expr::Kind::kVariable;
      e->name = std::move(name);
      return e;
    }
    fail(i_ < s_.size() ? "unexpected '" + std::string(1, s_[i_]) + "'" : "unexpected end");
  }

  ExprPtr number() {
    std::size_t start = i_;
    while (i_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[i_]))) ++i_;
    cpp_int whole(std::string(s_.substr(start, i_ - start)));
    Rational v(whole);
    if (i_ + 1 < s_.size() && s_[i_] == '.' && std::isdigit(static_cast<unsigned char>(s_[i_ + 1]))) {
      std::size_t f = ++i_;
      while (i_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[i_]))) ++i_;
      cpp_int frac(std::string(s_.substr(f, i_ - f)));
      cpp_int scale = boost::multiprecision::pow(cpp_int(10), static_cast<unsigned>(i_ - f));
      v += Rational(frac, scale);
    }
    auto e = std::make_shared<Expr>();
    e->kind = Expr::Kind::kNumber;
    e->value = v;
    return e;
  }

  std::string_view s_;
  std::size_t i_ = 0;
};

cpp_int floor_of(const Rational& q) {
  cpp_int n = boost::multiprecision::numerator(q);
  cpp_int d = boost::multiprecision::denominator(q);  // always positive
  cpp_int f = n / d;                                   // truncates
  if (n < 0 && f * d != n) f -= 1;
  return f;
}

cpp_int trunc_of(const Rational& q) {
  return boost::multiprecision::numerator(q) / boost::multiprecision::denominator(q);
}

const char* op_text(Expr::Kind k) {
  switch (k) {
    case Expr::Kind::kAdd: return "+";
    case Expr::Kind::kSub: return "-";
    case Expr::Kind::kMul: return "*";
    case Expr::Kind::kDiv: return "/";
    case Expr::Kind::kFloorDiv: return "//";
    case Expr::Kind::kMod: return "%";
    default: return "?";
  }
}

}  // namespace

ExprPtr parse_expression(std::string_view text) { return Parser(text).parse(); }

std::string canonical(const Expr& e) {
  switch (e.kind) {
    case Expr::Kind::kNumber: return e.value.str();
    case Expr::Kind::kVariable: return e.name;
    case Expr::Kind::kNeg: return "(-" + canonical(*e.lhs) + ")";
    case Expr::Kind::kInt: return "int(" + canonical(*e.lhs) + ")";
    default: return "(" + canonical(*e.lhs) + " " + op_text(e.kind) + " " + canonical(*e.rhs) + ")";
  }
}

std::set<std::string> free_variables(const Expr& e) {
  std::set<std::string> out;
  if (e.kind == Expr::Kind::kVariable) out.insert(e.name);
  for (const auto* c : {e.lhs.get(), e.rhs.get()}) {
    if (!c) continue;
    auto sub = free_variables(*c);
    out.insert(sub.begin(), sub.end());
  }
  return out;
}

Rational evaluate(const Expr& e, const std::map<std::string, Rational>& env) {
  switch (e.kind) {
    case Expr::Kind::kNumber: return e.value;
    case Expr::Kind::kVariable: {
      auto it = env.find(e.name);
      if (it == env.end()) throw EvaluationError("unbound variable '" + e.name + "'");
      return it->second;
    }
    case Expr::Kind::kNeg: return -evaluate(*e.lhs, env);
    case Expr::Kind::kInt: return Rational(trunc_of(evaluate(*e.lhs, env)));
    default: break;
  }
  Rational a = evaluate(*e.lhs, env);
  Rational b = evaluate(*e.rhs, env);
  switch (e.kind) {
    case Expr::Kind::kAdd: return a + b;
    case Expr::Kind::kSub: return a - b;
    case Expr::Kind::kMul: return a * b;
    default: break;
  }
  if (b == 0) throw DivisionByZero();
  switch (e.kind) {
    case Expr::Kind::kDiv: return a / b;
    case Expr::Kind::kFloorDiv: return Rational(floor_of(a / b));
    case Expr::Kind::kMod: return a - b * Rational(floor_of(a / b));
    default: throw EvaluationError("unknown operator");
  }
}

bool check_equivalence(std::string_view a, std::string_view b, const EquivalenceOracle& oracle,
                       const std::set<std::string>& vars) {
  if (oracle.trials < 1) throw std::invalid_argument("the oracle needs at least one trial");
  if (oracle.min_value > oracle.max_value) throw std::invalid_argument("empty value range");
  ExprPtr ea = parse_expression(a);
  ExprPtr eb = parse_expression(b);
  for (const auto* e : {ea.get(), eb.get()}) {
    for (const auto& v : free_variables(*e)) {
      if (!vars.count(v)) throw EvaluationError("unbound variable '" + v + "'");
    }
  }
  if (canonical(*ea) == canonical(*eb)) return true;

  // Assignments depend only on the seed and the sorted variable set, so the
  // check is symmetric.
  std::mt19937_64 rng(oracle.seed);
  std::uniform_int_distribution<std::int64_t> dist(oracle.min_value, oracle.max_value);
  std::size_t evaluated = 0;
  for (std::size_t t = 0; t < oracle.trials; ++t) {
    for (std::size_t attempt = 0; attempt < oracle.max_resamples; ++attempt) {
      std::map<std::string, Rational> env;
      for (const auto& v : vars) env[v] = Rational(dist(rng));
      Rational va, vb;
      try {
        va = evaluate(*ea, env);
        vb = evaluate(*eb, env);
      } catch (const DivisionByZero&) {
        continue;
      }
      if (va != vb) return false;
      ++evaluated;
      break;
    }
  }
  if (evaluated == 0) throw EvaluationError("no assignment avoids a zero divisor");
  return true;
}

std::optional<std::string> extract_final_answer(std::string_view output, std::string_view s1,
                                                std::string_view s2) {
  std::optional<std::string> last;
  std::size_t from = 0;
  while (true) {
    auto open = output.find(s1, from);
    if (open == std::string_view::npos) break;
    auto close = output.find(s2, open + s1.size());
    if (close == std::string_view::npos) break;
    last = std::string(output.substr(open + s1.size(), close - open - s1.size()));
    from = close + s2.size();
  }
  return last;
}

bool check_parse(std::string_view expr, const GrammarSpec& g, std::string_view s1, std::string_view s2) {
  return is_member(augment_with_delimiters(g, s1, s2), std::string(s1) + std::string(expr) + std::string(s2));
}

bool check_prover9_compiles(std::string_view output, const GrammarSpec& g) { return is_member(g, output); }

std::vector<TaskInstance> parse_dataset_jsonl(std::string_view text) {
  std::vector<TaskInstance> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = nlohmann::json::parse(line);
      TaskInstance t;
      t.id = j.contains("id") && j["id"].is_number() ? std::to_string(j["id"].get<long>())
                                                     : j.value("id", std::to_string(lineno));
      t.question = j.at("question").get<std::string>();
      t.variables = j.value("variables", std::vector<std::string>{});
      t.ground_truth = j.at("answer").get<std::string>();
      t.grammar = j.value("grammar", "gsm");
      out.push_back(std::move(t));
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument("dataset line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

Method parse_method(std::string_view name) {
  if (name == "crane") return Method::kCrane;
  if (name == "constrained") return Method::kConstrained;
  if (name == "unconstrained") return Method::kUnconstrained;
  if (name == "unconstrained_no_cot") return Method::kUnconstrainedNoCot;
  throw std::invalid_argument("unknown method '" + std::string(name) + "'");
}

const char* to_string(Method m) {
  switch (m) {
    case Method::kCrane: return "crane";
    case Method::kConstrained: return "constrained";
    case Method::kUnconstrained: return "unconstrained";
    case Method::kUnconstrainedNoCot: return "unconstrained_no_cot";
  }
  return "?";
}

std::string render_prompt(Method m, const std::string& grammar_id, std::string_view question) {
  std::string path = grammar_id == "prover9"                                          ? "prompts/folio.txt"
                     : (m == Method::kCrane || m == Method::kUnconstrained) ? "prompts/gsm_cot.txt"
                                                                                      : "prompts/gsm_no_cot.txt";
  std::string text(*bundled_resource(path));
  const std::string placeholder = "{question}";
  auto pos = text.rfind(placeholder);
  if (pos == std::string::npos) throw std::logic_error(path + " has no {question} placeholder");
  text.replace(pos, placeholder.size(), question);
  return text;
}

namespace {

std::string collapse_ws(std::string_view s) {
  std::string out;
  bool space = false;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      space = !out.empty();
    } else {
      if (space) out += ' ';
      out += c;
      space = false;
    }
  }
  return out;
}

InstanceRecord evaluate_instance(const TaskInstance& task, Method method, const LanguageModel& lm,
                                 const EvalConfig& cfg) {
  InstanceRecord rec;
  rec.id = task.id;
  try {
    const bool fol = task.grammar == "prover9";
    GrammarSpec full = load_grammar(task.grammar);
    GrammarSpec body = fol ? full : task.grammar == "gsm" ? select_start(full, "expr") : full;
    std::set<std::string> vars(task.variables.begin(), task.variables.end());
    if (!vars.empty() && body.has_terminal("VARIABLE")) {
      body = specialize_terminal(body, "VARIABLE", vars);
      full = specialize_terminal(full, "VARIABLE", vars);
    }

    const Vocabulary& vocab = lm.vocabulary();
    std::vector<TokenId> prompt = vocab.encode_greedy(render_prompt(method, task.grammar, task.question));
    const DecodeConfig& dc = cfg.decode;
    GenerationResult gen;
    switch (method) {
      case Method::kCrane:
        gen = crane_generate(prompt, lm, body, dc);
        break;
      case Method::kConstrained:
        gen = constrained_generate(prompt, lm, full, dc);
        break;
      case Method::kUnconstrained:
      case Method::kUnconstrainedNoCot:
        gen = unconstrained_generate(prompt, lm, dc);
        break;
    }
    rec.token_count = gen.token_count(vocab);
    std::string text = gen.text(vocab);

    rec.extracted = extract_final_answer(text, dc.s1, dc.s2);
    if (fol && !rec.extracted) rec.extracted = text;
    if (!rec.extracted) return rec;

    if (fol) {
      rec.parsed = check_prover9_compiles(*rec.extracted, body);
      rec.equivalent = rec.parsed && collapse_ws(*rec.extracted) == collapse_ws(task.ground_truth);
    } else {
      rec.parsed = check_parse(*rec.extracted, body, dc.s1, dc.s2);
      if (rec.parsed) {
        try {
          rec.equivalent = check_equivalence(*rec.extracted, task.ground_truth, cfg.oracle, vars);
        } catch (const EvaluationError& e) {
          rec.error = e.what();
        }
      }
    }
  } catch (const std::exception& e) {
    rec.error = e.what();
  }
  return rec;
}

}  // namespace

EvalReport run_eval(const std::vector<TaskInstance>& dataset, Method method, const LanguageModel& lm,
                    const EvalConfig& cfg) {
  EvalReport report;
  report.method = method;
  report.records.resize(dataset.size());

  std::size_t threads = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, std::max<std::size_t>(dataset.size(), 1));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next++) < dataset.size();) {
      report.records[i] = evaluate_instance(dataset[i], method, lm, cfg);
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  if (report.records.empty()) return report;
  std::size_t parsed = 0, equivalent = 0, tokens = 0;
  for (const auto& r : report.records) {
    parsed += r.parsed;
    equivalent += r.equivalent;
    tokens += r.token_count;
  }
  const double n = static_cast<double>(report.records.size());
  report.parse_pct = 100.0 * static_cast<double>(parsed) / n;
  report.accuracy_pct = 100.0 * static_cast<double>(equivalent) / n;
  report.avg_tokens = static_cast<double>(tokens) / n;
  return report;
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["method"] = to_string(method);
  j["instances"] = records.size();
  j["accuracy_pct"] = accuracy_pct;
  j["parse_pct"] = parse_pct;
  j["avg_tokens"] = avg_tokens;
  j["records"] = nlohmann::json::array();
  for (const auto& r : records) {
    nlohmann::json o = {{"id", r.id},
                        {"extracted", r.extracted ? nlohmann::json(*r.extracted) : nlohmann::json(nullptr)},
                        {"parsed", r.parsed},
                        {"equivalent", r.equivalent},
                        {"token_count", r.token_count}};
    if (!r.error.empty()) o["error"] = r.error;
    j["records"].push_back(std::move(o));
  }
  return j.dump(2, ' ', false, nlohmann::json::error_handler_t::replace);
}

}  // namespace crane::eval
