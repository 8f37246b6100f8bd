#include <doctest.h>

#include <set>

#include "crane/lm_adapters.hpp"
#include "crane/resources.hpp"
#include "crane/token_mask.hpp"
#include "crane/turing.hpp"
#include "support.hpp"

using namespace crane;
using namespace crane::tm;

namespace {

std::vector<std::string> all_strings(const std::string& alphabet, std::size_t max_len) {
  std::vector<std::string> out{""};
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i].size() == max_len) continue;
    for (char c : alphabet) out.push_back(out[i] + c);
  }
  return out;
}

const char* kMachines[] = {"copy", "parity", "unary_increment"};

}  // namespace

TEST_CASE("bundled machines load and are total") {
  for (const char* name : kMachines) {
    auto m = TuringMachine::bundled(name);
    CHECK(m.name() == name);
    for (const auto& q : m.states()) {
      if (m.halting(q)) continue;
      // Every read tuple over the tape alphabet has a row.
      for (const auto& read : all_strings(m.tape_alphabet(), m.num_tapes())) {
        if (read.size() == m.num_tapes()) CHECK_NOTHROW(m.delta(q, read));
      }
    }
  }
  CHECK_THROWS_AS(TuringMachine::bundled("nope"), MachineError);
}

TEST_CASE("machine file validation") {
  std::string base(*bundled_resource("machines/parity.json"));
  auto j = nlohmann::json::parse(base);

  auto bad = j;
  bad["transitions"].erase(bad["transitions"].end() - 1);
  CHECK_THROWS_AS(TuringMachine::from_json_text(bad.dump()), MachineError);

  bad = j;
  bad["input_alphabet"].push_back("_");
  CHECK_THROWS_AS(TuringMachine::from_json_text(bad.dump()), MachineError);

  bad = j;
  bad["initial"] = "missing";
  CHECK_THROWS_AS(TuringMachine::from_json_text(bad.dump()), MachineError);

  bad = j;
  bad["transitions"][0]["move"] = {2, 0};
  CHECK_THROWS_AS(TuringMachine::from_json_text(bad.dump()), MachineError);

  CHECK_THROWS_AS(TuringMachine::from_json_text("{"), MachineError);
}

TEST_CASE("tm_step semantics") {
  auto copy = TuringMachine::bundled("copy");
  auto c0 = initial_configuration(copy, "10");
  auto c1 = tm_step(copy, c0);
  CHECK(c1.state == "copy");
  CHECK(c1.read(1, copy.blank()) == '_');
  CHECK(c1.tapes[1].at(0) == '1');
  CHECK(c1.heads == std::vector<long>{1, 1});
  CHECK(c1.step == 1);

  // q0 halting: stepping is an error.
  auto j = nlohmann::json::parse(*bundled_resource("machines/parity.json"));
  j["initial"] = "halt";
  auto halted = TuringMachine::from_json_text(j.dump());
  CHECK_THROWS_AS(tm_step(halted, initial_configuration(halted, "1")), MachineError);
  auto run = tm_run(halted, "1", {});
  CHECK(run.halted);
  CHECK(run.steps() == 0);

  // The copy machine walks its output head to -1 while rewinding.
  auto r = tm_run(copy, "1", {});
  bool negative = false;
  for (const auto& c : r.trace) negative |= c.heads[1] < 0;
  CHECK(negative);

  CHECK_THROWS_AS(initial_configuration(copy, "2"), MachineError);
}

TEST_CASE("tm_run examples") {
  auto copy = TuringMachine::bundled("copy");
  auto parity = TuringMachine::bundled("parity");
  CHECK(tm_run(copy, "101", {}).output == "101");
  CHECK(tm_run(copy, "", {}).output == "");
  CHECK(tm_run(parity, "1011", {}).output == "1");
  CHECK(tm_run(parity, "", {}).output == "0");

  auto r = tm_run(copy, "1011", StepBudget{3});
  CHECK_FALSE(r.halted);
  CHECK(r.steps() == 3);
  CHECK(r.output.empty());
}

TEST_CASE("tm_run agrees with a naive simulator") {
  for (const char* name : kMachines) {
    std::string text(*bundled_resource(std::string("machines/") + name + ".json"));
    auto m = TuringMachine::from_json_text(text);
    for (const auto& x : all_strings(m.input_alphabet(), 8)) {
      auto fast = tm_run(m, x, {});
      auto slow = testsupport::naive_tm_run(text, x, 10000);
      REQUIRE(fast.halted == slow.halted);
      CHECK(fast.steps() == slow.steps);
      CHECK(fast.output == slow.output);
    }
  }
}

TEST_CASE("step counts of the bundled machines") {
  auto copy = TuringMachine::bundled("copy");
  auto parity = TuringMachine::bundled("parity");
  auto inc = TuringMachine::bundled("unary_increment");
  for (std::size_t n = 0; n <= 12; ++n) {
    CHECK(tm_run(parity, std::string(n, '1'), {}).steps() == n + 1);
    CHECK(tm_run(copy, std::string(n, '0'), {}).steps() == 2 * n + 2);
    auto r = tm_run(inc, std::string(n, '1'), {});
    CHECK(r.steps() == 4 * n + 5);
    CHECK(r.output == std::string(n + 1, '1'));
  }
}

TEST_CASE("configuration encodings") {
  auto copy = TuringMachine::bundled("copy");
  auto run = tm_run(copy, "10", {});
  auto enc = trace_encodings(copy, run);
  REQUIRE(enc.size() == 6);
  CHECK(enc[0] == "[copy;1;+,+]");
  CHECK(enc[1] == "[copy;0;+,+]");
  CHECK(enc[2] == "[rewind;_;0,-]");
  CHECK(enc[5] == "[halt;_;0,+]");
  CHECK(trace_encodings(copy, tm_run(copy, "10", {})) == enc);

  CHECK_THROWS_AS(encode_config(copy, run.trace[0], run.trace[2]), MachineError);
  CHECK_THROWS_AS(encode_config(copy, run.trace.back(), run.trace.back()), MachineError);

  // Parity: the distinct (state entered, write, moves) signatures of delta.
  auto parity = TuringMachine::bundled("parity");
  std::set<std::string> expected{"[even;_;+,0]", "[odd;_;+,0]", "[halt;0;0,0]", "[halt;1;0,0]"};
  auto all = enumerate_encodings(parity);
  CHECK(std::set<std::string>(all.begin(), all.end()) == expected);
  CHECK(all.size() == expected.size());

  // Every encoding on a trace is enumerated.
  for (const char* name : kMachines) {
    auto m = TuringMachine::bundled(name);
    auto known = enumerate_encodings(m);
    for (const auto& x : all_strings(m.input_alphabet(), 6)) {
      for (const auto& e : trace_encodings(m, tm_run(m, x, {}))) {
        CHECK(std::find(known.begin(), known.end(), e) != known.end());
      }
    }
  }
}

TEST_CASE("machine-backed model") {
  auto parity = TuringMachine::bundled("parity");
  TMBackedLM lm(parity);
  const auto& v = lm.vocabulary();
  auto run = tm_run(parity, "101", {});
  auto enc = trace_encodings(parity, run);

  std::vector<TokenId> ctx = lm.encode_input("101");
  CHECK(argmax(lm.scores(ctx)) == lm.encoding_token(enc[0]));
  for (const auto& e : enc) ctx.push_back(lm.encoding_token(e));
  CHECK(argmax(lm.scores(ctx)) == lm.symbol_token(run.output[0]));
  ctx.push_back(lm.symbol_token(run.output[0]));
  CHECK(argmax(lm.scores(ctx)) == v.eos_id());
  CHECK(lm.malformed_contexts() == 0);

  // A wrong encoding cannot be replayed.
  std::vector<TokenId> bad = lm.encode_input("1");
  bad.push_back(lm.encoding_token("[halt;0;0,0]"));
  auto s = lm.scores(bad);
  CHECK(std::all_of(s.begin(), s.end(), [&](double x) { return x == s[0]; }));
  CHECK(lm.malformed_contexts() == 1);

  // Unconstrained greedy decoding reproduces the machine.
  for (const char* name : kMachines) {
    auto m = TuringMachine::bundled(name);
    TMBackedLM model(m);
    for (const auto& x : all_strings(m.input_alphabet(), 6)) {
      auto r = tm_run(m, x, {});
      std::string expected;
      for (const auto& e : trace_encodings(m, r)) expected += e;
      expected += r.output;
      DecodeConfig cfg;
      cfg.max_new_tokens = 200;
      auto gen = unconstrained_generate(model.encode_input(x), model, cfg);
      CHECK(gen.stopped_on_eos);
      CHECK(gen.text(model.vocabulary()) == expected);
    }
  }
}

TEST_CASE("reasoning grammar demonstration") {
  auto parity = TuringMachine::bundled("parity");
  auto rep = demo_reasoning(parity, output_grammar("parity"), "1011", {});
  CHECK_MESSAGE(rep.passed, rep.message);
  CHECK(rep.reasoning_tokens == tm_run(parity, "1011", {}).steps());
  CHECK(rep.produced.substr(rep.produced.size() - 1) == "1");

  auto copy = TuringMachine::bundled("copy");
  auto empty = demo_reasoning(copy, output_grammar("copy"), "", {});
  CHECK_MESSAGE(empty.passed, empty.message);
  CHECK(empty.output_tokens == 0);
  CHECK(empty.reasoning_tokens == 2);

  auto inc = TuringMachine::bundled("unary_increment");
  auto r = demo_reasoning(inc, output_grammar("unary_increment"), "111", {});
  CHECK_MESSAGE(r.passed, r.message);
  CHECK(r.output_tokens == 4);

  auto budget = demo_reasoning(inc, output_grammar("unary_increment"), "111", StepBudget{4});
  CHECK_FALSE(budget.passed);
}

TEST_CASE("output grammar alone admits no reasoning token") {
  auto parity = TuringMachine::bundled("parity");
  TMBackedLM lm(parity);
  const auto& v = lm.vocabulary();
  auto st = init(output_grammar("parity"));
  auto mask = compute_mask(st, v);
  for (const auto& e : enumerate_encodings(parity)) CHECK_FALSE(mask.test(static_cast<std::size_t>(lm.encoding_token(e))));

  // Restricted to the output grammar the answer comes in one block with no
  // reasoning prefix.
  DecodeConfig cfg;
  cfg.max_new_tokens = 10;
  auto gen = constrained_generate(lm.encode_input("1011"), lm, output_grammar("parity"), cfg);
  CHECK(gen.stopped_on_eos);
  CHECK(gen.token_count(v) == 1);
  CHECK(is_member(output_grammar("parity"), gen.text(v)));
}
