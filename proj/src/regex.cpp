#include "crane/regex.hpp"

#include <algorithm>
#include <bitset>
#include <map>
#include <memory>
#include <queue>

namespace crane::regex {

RegexError::RegexError(const std::string& pattern, std::size_t offset, const std::string& what)
    : std::runtime_error("regex /" + pattern + "/ at offset " + std::to_string(offset) + ": " +
                         what),
      offset_(offset) {}

Dfa::State Dfa::run(State s, std::string_view bytes) const {
  for (char c : bytes) {
    if (s == kDead) return kDead;
    s = step(s, static_cast<std::uint8_t>(c));
  }
  return s;
}

bool Dfa::matches(std::string_view bytes) const {
  State s = run(start_, bytes);
  return s != kDead && accepting(s);
}

namespace {

using ByteSet = std::bitset<256>;
constexpr int kUnbounded = -1;
constexpr int kMaxRepeat = 1000;

struct Node {
  enum class Kind { kEmpty, kSet, kConcat, kAlt, kRepeat };
  Kind kind = Kind::kEmpty;
  ByteSet set;
  std::vector<std::unique_ptr<Node>> children;
  int min = 0;
  int max = 0;
};

using NodePtr = std::unique_ptr<Node>;

NodePtr make_set(const ByteSet& s) {
  auto n = std::make_unique<Node>();
  n->kind = Node::Kind::kSet;
  n->set = s;
  return n;
}

ByteSet single(std::uint8_t b) {
  ByteSet s;
  s.set(b);
  return s;
}

ByteSet range(int lo, int hi) {
  ByteSet s;
  for (int c = lo; c <= hi; ++c) s.set(static_cast<std::size_t>(c));
  return s;
}

ByteSet digit_class() { return range('0', '9'); }
ByteSet word_class() { return range('0', '9') | range('a', 'z') | range('A', 'Z') | single('_'); }
ByteSet space_class() {
  return single(' ') | single('\t') | single('\n') | single('\r') | single('\f') | single('\v');
}

class Parser {
 public:
  explicit Parser(std::string_view pattern) : src_(pattern) {}

  NodePtr parse() {
    NodePtr n = parse_alt();
    if (pos_ != src_.size()) fail("unbalanced ')'");
    return n;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw RegexError(std::string(src_), pos_, what);
  }

  bool at_end() const { return pos_ >= src_.size(); }
  char peek() const { return src_[pos_]; }

  NodePtr parse_alt() {
    std::vector<NodePtr> alts;
    alts.push_back(parse_concat());
    while (!at_end() && peek() == '|') {
      ++pos_;
      alts.push_back(parse_concat());
    }
    if (alts.size() == 1) return std::move(alts.front());
    auto n = std::make_unique<Node>();
    n->kind = Node::Kind::kAlt;
    n->children = std::move(alts);
    return n;
  }

  NodePtr parse_concat() {
    auto n = std::make_unique<Node>();
    n->kind = Node::Kind::kConcat;
    while (!at_end() && peek() != '|' && peek() != ')') n->children.push_back(parse_repeat());
    if (n->children.empty()) n->kind = Node::Kind::kEmpty;
    if (n->children.size() == 1) return std::move(n->children.front());
    return n;
  }

  bool parse_braces(int& lo, int& hi) {
    // `{` that does not form a valid quantifier is a literal, as in Python.
    std::size_t p = pos_ + 1;
    auto read_int = [&](int& out) {
      std::size_t begin = p;
      long v = 0;
      while (p < src_.size() && src_[p] >= '0' && src_[p] <= '9') {
        v = v * 10 + (src_[p] - '0');
        if (v > kMaxRepeat) v = kMaxRepeat + 1;
        ++p;
      }
      out = static_cast<int>(v);
      return p > begin;
    };
    int a = 0;
    int b = 0;
    bool has_a = read_int(a);
    if (p < src_.size() && src_[p] == '}') {
      if (!has_a) return false;
      lo = hi = a;
    } else if (p < src_.size() && src_[p] == ',') {
      ++p;
      bool has_b = read_int(b);
      if (p >= src_.size() || src_[p] != '}') return false;
      lo = has_a ? a : 0;
      hi = has_b ? b : kUnbounded;
    } else {
      return false;
    }
    if (lo > kMaxRepeat || hi > kMaxRepeat) fail("repeat count too large");
    if (hi != kUnbounded && hi < lo) fail("min repeat greater than max repeat");
    pos_ = p + 1;
    return true;
  }

  NodePtr parse_repeat() {
    NodePtr atom = parse_atom();
    bool quantified = false;
    while (!at_end()) {
      int lo = 0;
      int hi = 0;
      char c = peek();
      if (c == '*') {
        lo = 0, hi = kUnbounded, ++pos_;
      } else if (c == '+') {
        lo = 1, hi = kUnbounded, ++pos_;
      } else if (c == '?') {
        lo = 0, hi = 1, ++pos_;
      } else if (c == '{' && parse_braces(lo, hi)) {
      } else {
        break;
      }
      if (quantified) fail("multiple repeat");
      quantified = true;
      if (!at_end() && peek() == '?') ++pos_;  // lazy
      auto n = std::make_unique<Node>();
      n->kind = Node::Kind::kRepeat;
      n->min = lo;
      n->max = hi;
      n->children.push_back(std::move(atom));
      atom = std::move(n);
    }
    return atom;
  }

  std::uint8_t parse_hex(int digits) {
    int v = 0;
    for (int i = 0; i < digits; ++i) {
      if (at_end()) fail("truncated \\x escape");
      char c = src_[pos_++];
      int d;
      if (c >= '0' && c <= '9') {
        d = c - '0';
      } else if (c >= 'a' && c <= 'f') {
        d = c - 'a' + 10;
      } else if (c >= 'A' && c <= 'F') {
        d = c - 'A' + 10;
      } else {
        fail("bad hex digit");
      }
      v = v * 16 + d;
    }
    return static_cast<std::uint8_t>(v);
  }

  // Parses the escape after a consumed backslash. Returns the matched set and
  // whether it denotes a single byte (usable as a range endpoint).
  ByteSet parse_escape(bool& single_byte, std::uint8_t& byte) {
    if (at_end()) fail("trailing backslash");
    char c = src_[pos_++];
    single_byte = false;
    switch (c) {
      case 'd': return digit_class();
      case 'D': return ~digit_class();
      case 'w': return word_class();
      case 'W': return ~word_class();
      case 's': return space_class();
      case 'S': return ~space_class();
      case 'b':
      case 'B':
      case 'A':
      case 'Z':
        fail("anchors are not supported");
      default:
        break;
    }
    single_byte = true;
    switch (c) {
      case 'n': byte = '\n'; break;
      case 't': byte = '\t'; break;
      case 'r': byte = '\r'; break;
      case 'f': byte = '\f'; break;
      case 'v': byte = '\v'; break;
      case '0': byte = '\0'; break;
      case 'x': byte = parse_hex(2); break;
      default:
        if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '1' && c <= '9')) {
          --pos_;
          fail(std::string("unsupported escape \\") + c);
        }
        byte = static_cast<std::uint8_t>(c);
    }
    return single(byte);
  }

  ByteSet parse_class() {
    // Called after '['.
    bool negate = false;
    if (!at_end() && peek() == '^') {
      negate = true;
      ++pos_;
    }
    ByteSet set;
    bool first = true;
    while (true) {
      if (at_end()) fail("unterminated character class");
      char c = peek();
      if (c == ']' && !first) {
        ++pos_;
        break;
      }
      first = false;
      bool is_single = true;
      std::uint8_t lo = 0;
      ByteSet item;
      ++pos_;
      if (c == '\\') {
        item = parse_escape(is_single, lo);
      } else {
        if (static_cast<std::uint8_t>(c) >= 0x80) {
          --pos_;
          fail("non-ASCII characters inside a class are not supported");
        }
        lo = static_cast<std::uint8_t>(c);
        item = single(lo);
      }
      if (is_single && pos_ + 1 < src_.size() && peek() == '-' && src_[pos_ + 1] != ']') {
        ++pos_;
        char d = src_[pos_++];
        std::uint8_t hi = 0;
        if (d == '\\') {
          bool s2 = true;
          parse_escape(s2, hi);
          if (!s2) fail("bad range endpoint");
        } else {
          hi = static_cast<std::uint8_t>(d);
        }
        if (hi < lo) fail("bad character range");
        item = range(lo, hi);
      }
      set |= item;
    }
    return negate ? ~set : set;
  }

  NodePtr parse_atom() {
    if (at_end()) fail("unexpected end of pattern");
    char c = src_[pos_++];
    switch (c) {
      case '(': {
        if (!at_end() && peek() == '?') {
          if (pos_ + 1 < src_.size() && src_[pos_ + 1] == ':') {
            pos_ += 2;
          } else {
            fail("unsupported group extension");
          }
        }
        NodePtr inner = parse_alt();
        if (at_end() || peek() != ')') fail("missing ')'");
        ++pos_;
        return inner;
      }
      case '[':
        return make_set(parse_class());
      case '.':
        return make_set(~single('\n'));
      case '\\': {
        bool s = false;
        std::uint8_t b = 0;
        return make_set(parse_escape(s, b));
      }
      case '^':
      case '$':
        --pos_;
        fail("anchors are not supported");
      case '*':
      case '+':
      case '?':
        --pos_;
        fail("nothing to repeat");
      default:
        return make_set(single(static_cast<std::uint8_t>(c)));
    }
  }

  std::string_view src_;
  std::size_t pos_ = 0;
};

struct Nfa {
  struct State {
    ByteSet on;
    int next = -1;
    std::vector<int> eps;
  };
  std::vector<State> states;
  int start = 0;
  int accept = 0;

  int add() {
    states.emplace_back();
    return static_cast<int>(states.size()) - 1;
  }
};

struct Fragment {
  int start;
  int end;
};

Fragment emit(Nfa& nfa, const Node& n);

Fragment emit_repeat(Nfa& nfa, const Node& n) {
  const Node& child = *n.children.front();
  int s = nfa.add();
  int cur = s;
  for (int i = 0; i < n.min; ++i) {
    Fragment f = emit(nfa, child);
    nfa.states[static_cast<std::size_t>(cur)].eps.push_back(f.start);
    cur = f.end;
  }
  int e = nfa.add();
  if (n.max == kUnbounded) {
    Fragment f = emit(nfa, child);
    nfa.states[static_cast<std::size_t>(cur)].eps.push_back(f.start);
    nfa.states[static_cast<std::size_t>(cur)].eps.push_back(e);
    nfa.states[static_cast<std::size_t>(f.end)].eps.push_back(f.start);
    nfa.states[static_cast<std::size_t>(f.end)].eps.push_back(e);
  } else {
    for (int i = n.min; i < n.max; ++i) {
      Fragment f = emit(nfa, child);
      nfa.states[static_cast<std::size_t>(cur)].eps.push_back(f.start);
      nfa.states[static_cast<std::size_t>(cur)].eps.push_back(e);
      cur = f.end;
    }
    nfa.states[static_cast<std::size_t>(cur)].eps.push_back(e);
  }
  return {s, e};
}

Fragment emit(Nfa& nfa, const Node& n) {
  switch (n.kind) {
    case Node::Kind::kEmpty: {
      int s = nfa.add();
      return {s, s};
    }
    case Node::Kind::kSet: {
      int s = nfa.add();
      int e = nfa.add();
      nfa.states[static_cast<std::size_t>(s)].on = n.set;
      nfa.states[static_cast<std::size_t>(s)].next = e;
      return {s, e};
    }
    case Node::Kind::kConcat: {
      Fragment first = emit(nfa, *n.children.front());
      int cur = first.end;
      for (std::size_t i = 1; i < n.children.size(); ++i) {
        Fragment f = emit(nfa, *n.children[i]);
        nfa.states[static_cast<std::size_t>(cur)].eps.push_back(f.start);
        cur = f.end;
      }
      return {first.start, cur};
    }
    case Node::Kind::kAlt: {
      int s = nfa.add();
      int e = nfa.add();
      for (const auto& c : n.children) {
        Fragment f = emit(nfa, *c);
        nfa.states[static_cast<std::size_t>(s)].eps.push_back(f.start);
        nfa.states[static_cast<std::size_t>(f.end)].eps.push_back(e);
      }
      return {s, e};
    }
    case Node::Kind::kRepeat:
      return emit_repeat(nfa, n);
  }
  return {0, 0};
}

void closure(const Nfa& nfa, std::vector<int>& set) {
  std::vector<char> seen(nfa.states.size(), 0);
  std::vector<int> stack = set;
  for (int s : set) seen[static_cast<std::size_t>(s)] = 1;
  while (!stack.empty()) {
    int s = stack.back();
    stack.pop_back();
    for (int t : nfa.states[static_cast<std::size_t>(s)].eps) {
      if (!seen[static_cast<std::size_t>(t)]) {
        seen[static_cast<std::size_t>(t)] = 1;
        set.push_back(t);
        stack.push_back(t);
      }
    }
  }
  std::sort(set.begin(), set.end());
}

}  // namespace

class DfaBuilder {
 public:
  static Dfa determinize(const Nfa& nfa) {
    std::map<std::vector<int>, int> ids;
    std::vector<std::vector<int>> sets;
    std::vector<std::array<int, 256>> trans;
    std::vector<std::uint8_t> accepting;

    auto intern = [&](std::vector<int> set) {
      auto [it, inserted] = ids.emplace(set, static_cast<int>(sets.size()));
      if (inserted) {
        accepting.push_back(std::binary_search(set.begin(), set.end(), nfa.accept) ? 1 : 0);
        sets.push_back(std::move(set));
        trans.emplace_back();
      }
      return it->second;
    };

    std::vector<int> init{nfa.start};
    closure(nfa, init);
    intern(init);
    for (std::size_t i = 0; i < sets.size(); ++i) {
      for (int b = 0; b < 256; ++b) {
        std::vector<int> next;
        for (int s : sets[i]) {
          const auto& st = nfa.states[static_cast<std::size_t>(s)];
          if (st.next >= 0 && st.on.test(static_cast<std::size_t>(b))) next.push_back(st.next);
        }
        if (next.empty()) {
          trans[i][static_cast<std::size_t>(b)] = -1;
          continue;
        }
        std::sort(next.begin(), next.end());
        next.erase(std::unique(next.begin(), next.end()), next.end());
        closure(nfa, next);
        int id = intern(std::move(next));
        trans[i][static_cast<std::size_t>(b)] = id;
      }
    }

    // Keep only states from which an accepting state is reachable.
    const std::size_t n = sets.size();
    std::vector<std::vector<int>> reverse(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (int t : trans[i]) {
        if (t >= 0) reverse[static_cast<std::size_t>(t)].push_back(static_cast<int>(i));
      }
    }
    std::vector<char> live(n, 0);
    std::queue<int> q;
    for (std::size_t i = 0; i < n; ++i) {
      if (accepting[i]) {
        live[i] = 1;
        q.push(static_cast<int>(i));
      }
    }
    while (!q.empty()) {
      int s = q.front();
      q.pop();
      for (int p : reverse[static_cast<std::size_t>(s)]) {
        if (!live[static_cast<std::size_t>(p)]) {
          live[static_cast<std::size_t>(p)] = 1;
          q.push(p);
        }
      }
    }
    std::vector<int> remap(n, Dfa::kDead);
    int next_id = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (live[i]) remap[i] = next_id++;
    }

    Dfa dfa;
    dfa.start_ = remap[0];
    dfa.table_.assign(static_cast<std::size_t>(next_id) * 256, Dfa::kDead);
    dfa.accepting_.assign(static_cast<std::size_t>(next_id), 0);
    dfa.extensible_.assign(static_cast<std::size_t>(next_id), 0);
    for (std::size_t i = 0; i < n; ++i) {
      if (!live[i]) continue;
      auto id = static_cast<std::size_t>(remap[i]);
      dfa.accepting_[id] = accepting[i];
      for (std::size_t b = 0; b < 256; ++b) {
        int t = trans[i][b];
        dfa.table_[id * 256 + b] = t >= 0 ? remap[static_cast<std::size_t>(t)] : Dfa::kDead;
        if (dfa.table_[id * 256 + b] != Dfa::kDead) dfa.extensible_[id] = 1;
      }
    }
    return dfa;
  }
};

Dfa compile(std::string_view pattern) {
  Parser parser(pattern);
  NodePtr root = parser.parse();
  Nfa nfa;
  Fragment f = emit(nfa, *root);
  nfa.start = f.start;
  nfa.accept = f.end;
  return DfaBuilder::determinize(nfa);
}

std::string escape(std::string_view literal) {
  static constexpr std::string_view kSpecial = "\\.^$|?*+()[]{}/";
  std::string out;
  for (char c : literal) {
    auto u = static_cast<unsigned char>(c);
    if (kSpecial.find(c) != std::string_view::npos) {
      out += '\\';
      out += c;
    } else if (u < 0x20 || u == 0x7f) {
      static constexpr char kHex[] = "0123456789abcdef";
      out += "\\x";
      out += kHex[u >> 4];
      out += kHex[u & 0xf];
    } else {
      out += c;
    }
  }
  return out;
}

Dfa compile_literal(std::string_view literal) { return compile(escape(literal)); }

}  // namespace crane::regex
