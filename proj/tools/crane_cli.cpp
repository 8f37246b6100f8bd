// Command-line front end: decode, eval and reasoning-demo.
#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "crane/decoder.hpp"
#include "crane/eval.hpp"
#include "crane/lm_adapters.hpp"
#include "crane/resources.hpp"
#include "crane/turing.hpp"

using namespace crane;

namespace {

Strategy parse_strategy(const std::string& text, std::uint64_t seed) {
  if (text == "greedy") return Strategy::greedy();
  if (text.rfind("temp:", 0) == 0) {
    double t = 0;
    try {
      t = std::stod(text.substr(5));
    } catch (const std::exception&) {
      throw CLI::ValidationError("--strategy", "bad temperature in '" + text + "'");
    }
    return Strategy::sample(t, seed);
  }
  throw CLI::ValidationError("--strategy", "expected greedy or temp:T, got '" + text + "'");
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

tm::TuringMachine load_machine(const std::string& name_or_path) {
  if (bundled_resource("machines/" + name_or_path + ".json")) return tm::TuringMachine::bundled(name_or_path);
  return tm::TuringMachine::from_json_text(read_file(name_or_path));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Grammar-constrained decoding with delimited reasoning windows"};
  app.require_subcommand(1);

  // decode
  auto* decode = app.add_subcommand("decode", "Generate from a prompt");
  std::string grammar = "gsm-expr", s1 = "<<", s2 = ">>", mode = "crane", lm_spec, prompt_file, strategy = "greedy",
              log_path, on_dead = "abort";
  std::size_t max_new = kGsmMaxNewTokens;
  std::uint64_t seed = 0;
  decode->add_option("--grammar", grammar, "gsm, gsm-expr, prover9 or a grammar file")->capture_default_str();
  decode->add_option("--s1", s1, "Opening delimiter")->capture_default_str();
  decode->add_option("--s2", s2, "Closing delimiter")->capture_default_str();
  decode->add_option("--mode", mode, "crane, constrained or unconstrained")
      ->check(CLI::IsMember({"crane", "constrained", "unconstrained"}))
      ->capture_default_str();
  decode->add_option("--lm", lm_spec, "scripted:FILE, tm:NAME_OR_FILE or remote:URL")->required();
  decode->add_option("--prompt", prompt_file, "Prompt text file")->required()->check(CLI::ExistingFile);
  decode->add_option("--max-new-tokens", max_new)->capture_default_str();
  decode->add_option("--strategy", strategy, "greedy or temp:T")->capture_default_str();
  decode->add_option("--seed", seed)->capture_default_str();
  decode->add_option("--log-steps", log_path, "Write the step log as JSON");
  decode->add_option("--on-no-viable", on_dead, "abort or close")
      ->check(CLI::IsMember({"abort", "close"}))
      ->capture_default_str();

  // eval
  auto* ev = app.add_subcommand("eval", "Score a method on a JSONL dataset");
  std::string dataset, method = "crane", eval_lm, eval_grammar, report_path;
  std::size_t trials = 100, threads = 0, eval_max_new = kGsmMaxNewTokens;
  std::uint64_t eval_seed = 0;
  ev->add_option("--dataset", dataset)->required()->check(CLI::ExistingFile);
  ev->add_option("--method", method)
      ->check(CLI::IsMember({"crane", "constrained", "unconstrained", "unconstrained_no_cot"}))
      ->capture_default_str();
  ev->add_option("--lm", eval_lm)->required();
  ev->add_option("--grammar", eval_grammar, "Override the grammar of every instance");
  ev->add_option("--report", report_path, "Write the report JSON here (default stdout)");
  ev->add_option("--trials", trials, "Equivalence trials")->capture_default_str();
  ev->add_option("--seed", eval_seed, "Equivalence seed")->capture_default_str();
  ev->add_option("--threads", threads, "0 = all cores")->capture_default_str();
  ev->add_option("--max-new-tokens", eval_max_new)->capture_default_str();

  // reasoning-demo
  auto* demo = app.add_subcommand("reasoning-demo", "Decode a bundled machine's run under its reasoning grammar");
  std::string machine = "parity", input;
  std::size_t max_len = 0, max_steps = 10000;
  demo->add_option("--machine", machine, "copy, parity, unary_increment or a machine file")->capture_default_str();
  auto* input_opt = demo->add_option("--input", input, "Single input string");
  demo->add_option("--max-len", max_len, "Check every input up to this length")->excludes(input_opt);
  demo->add_option("--max-steps", max_steps)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*decode) {
      auto model = make_language_model(lm_spec);
      const Vocabulary& vocab = model->vocabulary();
      DecodeConfig cfg;
      cfg.s1 = s1;
      cfg.s2 = s2;
      cfg.max_new_tokens = max_new;
      cfg.strategy = parse_strategy(strategy, seed);
      cfg.on_no_viable = on_dead == "close" ? OnNoViable::kCloseWindow : OnNoViable::kAbort;
      std::vector<TokenId> prompt = vocab.encode_greedy(read_file(prompt_file));
      GenerationResult gen;
      if (mode == "crane") {
        gen = crane_generate(prompt, *model, load_grammar(grammar), cfg);
      } else if (mode == "constrained") {
        gen = constrained_generate(prompt, *model, load_grammar(grammar), cfg);
      } else {
        cfg.validate();
        gen = unconstrained_generate(prompt, *model, cfg);
      }
      std::cout << gen.text(vocab) << "\n";
      if (gen.incomplete) std::cerr << "warning: generation stopped with an open window\n";
      if (!log_path.empty()) write_file(log_path, step_log_json(gen.steps) + "\n");
      return 0;
    }

    if (*ev) {
      auto model = make_language_model(eval_lm);
      auto tasks = eval::parse_dataset_jsonl(read_file(dataset));
      if (!eval_grammar.empty()) {
        for (auto& t : tasks) t.grammar = eval_grammar;
      }
      eval::EvalConfig cfg;
      cfg.decode.max_new_tokens = eval_max_new;
      cfg.oracle.trials = trials;
      cfg.oracle.seed = eval_seed;
      cfg.threads = threads;
      auto report = eval::run_eval(tasks, eval::parse_method(method), *model, cfg);
      if (report_path.empty()) {
        std::cout << report.to_json() << "\n";
      } else {
        write_file(report_path, report.to_json() + "\n");
        std::cout << method << ": accuracy " << report.accuracy_pct << "%, parse " << report.parse_pct
                  << "%, tokens " << report.avg_tokens << " over " << report.records.size() << " instances\n";
      }
      return 0;
    }

    if (*demo) {
      auto m = load_machine(machine);
      auto g = tm::output_grammar(m.name());
      std::vector<std::string> inputs;
      if (!input_opt->empty()) {
        inputs.push_back(input);
      } else {
        inputs.emplace_back();
        for (std::size_t i = 0; i < inputs.size(); ++i) {
          if (inputs[i].size() == max_len) continue;
          for (char c : m.input_alphabet()) inputs.push_back(inputs[i] + c);
        }
      }
      tm::ReasoningDemo run(m, g, tm::StepBudget{max_steps});
      std::size_t failed = 0;
      for (const auto& x : inputs) {
        auto rep = run.run(x);
        if (!rep.passed) ++failed;
        if (inputs.size() == 1 || !rep.passed) {
          std::cout << (rep.passed ? "pass" : "FAIL") << " x=\"" << x << "\" steps=" << rep.machine_steps
                    << " reasoning=" << rep.reasoning_tokens << " output=" << rep.output_tokens << "\n";
          if (inputs.size() == 1) std::cout << rep.produced << "\n";
          if (!rep.passed) std::cout << "  " << rep.message << "\n";
        }
      }
      std::cout << m.name() << ": " << inputs.size() - failed << "/" << inputs.size() << " inputs reproduced\n";
      return failed ? 1 : 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
