#include <doctest.h>

#include <random>
#include <set>
#include <string>

#include "crane/grammar.hpp"
#include "crane/recognizer.hpp"
#include "crane/resources.hpp"
#include "support.hpp"

using namespace crane;

TEST_CASE("GSM listing parses with TYPE at priority 4") {
  GrammarSpec g = load_grammar("gsm");
  CHECK(g.start() == "start");
  CHECK(g.terminal("TYPE").priority == 4);
  CHECK(g.terminal("TYPE").literal == std::optional<std::string>("int"));
  CHECK(g.has_rule("expr"));
}

TEST_CASE("Prover9 listing parses with VAR at -1 and the COMMENT regex") {
  GrammarSpec g = load_grammar("prover9");
  CHECK(g.start() == "start");
  CHECK(g.terminal("VAR").priority == -1);
  CHECK(g.terminal("PREDICATE").priority == -1);
  CHECK(g.terminal("COMMENT").pattern == ":::.*\\n");
  CHECK(g.ignored() == std::vector<std::string>{"WS"});
}

TEST_CASE("minimal grammar") {
  GrammarSpec g = parse_grammar_text("start: \"a\"\n");
  CHECK(g.productions().size() == 1);
  CHECK(g.terminals().size() == 1);
  CHECK(g.terminals().begin()->second.literal == std::optional<std::string>("a"));
}

TEST_CASE("parsing is deterministic") {
  std::string text(*bundled_resource("grammars/prover9.lark"));
  CHECK(parse_grammar_text(text) == parse_grammar_text(text));
}

TEST_CASE("aliases are recorded and ?-rules are ordinary rules") {
  GrammarSpec g = parse_grammar_text("?start: a -> top\na: \"x\" | \"y\" -> why\n");
  auto prods = g.productions_of("start");
  REQUIRE(prods.size() == 1);
  CHECK(prods[0]->alias == "top");
  CHECK(g.productions_of("a")[1]->alias == "why");
}

TEST_CASE("optional and repetition desugar into flagged epsilon productions") {
  GrammarSpec g = parse_grammar_text("start: \"a\"? \"b\"* (\"c\" | \"d\")+\n");
  int eps = 0;
  for (const auto& p : g.productions()) {
    if (p.rhs.empty()) {
      CHECK(p.epsilon_from_desugar);
      ++eps;
    }
  }
  CHECK(eps == 2);
  for (std::string s : {"c", "ac", "bbdc", "abcd"}) CHECK(is_member(g, s));
  for (std::string s : {"", "a", "ab", "ca"}) CHECK_FALSE(is_member(g, s));
}

TEST_CASE("syntax errors report line and column") {
  std::string text = read_file(CRANE_TEST_DATA "/gsm_listing_as_printed.lark");
  try {
    parse_grammar_text(text);
    FAIL("the truncated listing should not parse");
  } catch (const GrammarError& e) {
    CHECK(e.line() == 10);
    CHECK(e.column() > 0);
  }
  try {
    parse_grammar_text("start: \"a\"\n  b: |\n");
    FAIL("expected an error");
  } catch (const GrammarError& e) {
    CHECK(e.line() == 2);
  }
}

TEST_CASE("semantic grammar errors") {
  CHECK_THROWS_AS(parse_grammar_text("start: missing\n"), GrammarError);
  CHECK_THROWS_AS(parse_grammar_text("start: A\n"), GrammarError);
  CHECK_THROWS_AS(parse_grammar_text("start: \"a\"\nstart: \"b\"\n"), GrammarError);
  CHECK_THROWS_AS(parse_grammar_text("start: A\nA: /(ab/\n"), GrammarError);
  CHECK_THROWS_AS(parse_grammar_text("rule: \"a\"\n"), GrammarError);
  CHECK_THROWS_AS(parse_grammar_text("start: \"a\"\n%import common.WS\n"), GrammarError);
}

TEST_CASE("augment_with_delimiters on the GSM expression body") {
  GrammarSpec body = load_grammar("gsm-expr");
  GrammarSpec g = augment_with_delimiters(body, "<<", ">>");
  CHECK(is_member(g, "<<tf - t>>"));
  CHECK_FALSE(is_member(g, "<<tf - t"));
  CHECK_FALSE(is_member(g, "tf - t>>"));
  CHECK(body == load_grammar("gsm-expr"));
}

TEST_CASE("augment_with_delimiters on a singleton language") {
  GrammarSpec g = augment_with_delimiters(parse_grammar_text("start: \"a\"\n"), "[", "]");
  CHECK(testsupport::enumerate_language(g, 8) == std::set<std::string>{"[a]"});
}

TEST_CASE("augment_with_delimiters preserves membership exhaustively") {
  GrammarSpec g = parse_grammar_text("start: \"a\" start \"b\" | \"b\"*\n");
  auto lang = testsupport::enumerate_language(g, 10);
  GrammarSpec aug = augment_with_delimiters(g, "[", "]");
  auto cg = compile(g);
  auto caug = compile(aug);
  std::vector<std::string> words{""};
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (words[i].size() < 10) {
      for (char c : std::string("ab]")) words.push_back(words[i] + c);
    }
  }
  for (const auto& w : words) {
    CAPTURE(w);
    bool in = lang.count(w) != 0;
    CHECK(is_member(cg, w) == in);
    CHECK(is_member(caug, "[" + w + "]") == in);
  }

  // Random strings against "starts with s1, ends with s2, interior in L(g)".
  std::mt19937_64 rng(7);
  for (int i = 0; i < 200; ++i) {
    std::string s;
    std::size_t n = rng() % 13;
    for (std::size_t k = 0; k < n; ++k) s += "ab[]"[rng() % 4];
    if (i % 2 == 0) s = "[" + s.substr(0, 10) + "]";
    bool expect = s.size() >= 2 && s.front() == '[' && s.back() == ']' &&
                  lang.count(s.substr(1, s.size() - 2)) != 0;
    CAPTURE(s);
    CHECK(is_member(caug, s) == expect);
  }
  CHECK_THROWS(augment_with_delimiters(g, "", "]"));
}

TEST_CASE("build_reasoning_grammar accepts encodings then an answer") {
  GrammarSpec g = parse_grammar_text("start: \"0\" | \"1\"\n");
  std::vector<std::string> enc{"[a]", "[b]"};
  GrammarSpec ga = build_reasoning_grammar(g, enc);
  CHECK(is_member(ga, "[a][b][a]1"));
  CHECK(is_member(ga, "0"));
  CHECK_FALSE(is_member(ga, "[a][b]"));
  CHECK_FALSE(is_member(ga, "1[a]"));
  CHECK_THROWS_AS(build_reasoning_grammar(g, std::vector<std::string>{}), GrammarError);
  CHECK_THROWS_AS(build_reasoning_grammar(g, std::vector<std::string>{"x", "x"}), GrammarError);
}

TEST_CASE("build_reasoning_grammar language is encodings* then L(g)") {
  GrammarSpec g = parse_grammar_text("start: \"a\" start | \"b\"\n");
  std::vector<std::string> enc{"<p>", "<q>", "<pq>"};
  auto ga = compile(build_reasoning_grammar(g, enc));
  auto answers = testsupport::enumerate_language(g, 8);
  std::vector<std::string> reasoning{""};
  for (std::size_t i = 0; i < reasoning.size(); ++i) {
    if (reasoning[i].size() < 4 * 4) {
      for (const auto& e : enc) {
        if (std::count(reasoning[i].begin(), reasoning[i].end(), '<') < 4) reasoning.push_back(reasoning[i] + e);
      }
    }
  }
  for (const auto& r : reasoning) {
    for (const auto& w : answers) CHECK(is_member(ga, r + w));
    CHECK_FALSE(is_member(ga, r));
    CHECK_FALSE(is_member(ga, r + "<p"));
  }
}

TEST_CASE("specialize_terminal restricts VARIABLE") {
  GrammarSpec gsm = load_grammar("gsm");
  GrammarSpec g = specialize_terminal(gsm, "VARIABLE", {"tf", "t"});
  CHECK(is_member(g, "<<tf - t>>"));
  CHECK_FALSE(is_member(g, "<<x - t>>"));
  CHECK_FALSE(is_member(g, "<<tft>>"));
  CHECK(is_member(specialize_terminal(parse_grammar_text("start: V\nV: /[a-z]+/\n"), "V", {"v"}), "v"));
  CHECK_THROWS_AS(specialize_terminal(gsm, "NOPE", {"x"}), GrammarError);
  CHECK_THROWS_AS(specialize_terminal(gsm, "VARIABLE", {}), GrammarError);
}

TEST_CASE("specialize_terminal agrees with a variable filter on random strings") {
  GrammarSpec gsm = load_grammar("gsm");
  std::set<std::string> allowed{"tf", "t", "n_1"};
  GrammarSpec g = specialize_terminal(gsm, "VARIABLE", allowed);
  auto cg = compile(g);
  auto cgsm = compile(gsm);
  const std::vector<std::string> pieces{"tf", "t", "x", "n_1", "q", "2", " ", "-", "+", "*", "//", "(", ")", "%"};
  std::mt19937_64 rng(11);
  int members = 0;
  for (int i = 0; i < 500; ++i) {
    std::string s = "<<";
    std::size_t n = 1 + rng() % 6;
    for (std::size_t k = 0; k < n; ++k) s += pieces[rng() % pieces.size()];
    s += ">>";
    bool expect = is_member(cgsm, s);
    if (expect) {
      for (const auto& lx : lex(gsm, s)) {
        if (lx.terminal == "VARIABLE" && !allowed.count(lx.text)) expect = false;
      }
    }
    members += expect;
    CAPTURE(s);
    CHECK(is_member(cg, s) == expect);
  }
  CHECK(members > 20);
}
