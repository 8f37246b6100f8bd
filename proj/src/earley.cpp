#include "crane/earley.hpp"

#include <algorithm>
#include <map>

namespace crane::earley {

CompiledGrammar::CompiledGrammar(const GrammarSpec& g) {
  g.validate();

  std::map<std::string, int> nt_ids;
  for (const auto& name : g.nonterminals()) {
    nt_ids.emplace(name, static_cast<int>(nonterminal_names_.size()));
    nonterminal_names_.push_back(name);
  }
  const int augmented_start = static_cast<int>(nonterminal_names_.size());
  nonterminal_names_.push_back("<start>");

  std::vector<const TerminalDef*> ordered;
  for (const auto& [_, def] : g.terminals()) ordered.push_back(&def);
  std::sort(ordered.begin(), ordered.end(),
            [](const TerminalDef* a, const TerminalDef* b) { return a->order < b->order; });
  std::map<std::string, int> t_ids;
  for (const auto* def : ordered) {
    t_ids.emplace(def->name, static_cast<int>(terminals_.size()));
    terminals_.push_back({def->name, def->dfa, def->priority, def->order, false});
  }
  for (const auto& name : g.ignored()) {
    int t = t_ids.at(name);
    if (!terminals_[static_cast<std::size_t>(t)].ignored) {
      terminals_[static_cast<std::size_t>(t)].ignored = true;
      ignored_.push_back(t);
    }
  }

  std::vector<CompiledProduction> all;
  all.push_back({augmented_start, {nt_ids.at(g.start())}});
  for (const auto& p : g.productions()) {
    CompiledProduction cp;
    cp.lhs = nt_ids.at(p.lhs);
    for (const auto& s : p.rhs) {
      cp.rhs.push_back(s.is_terminal() ? terminal_symbol(t_ids.at(s.name)) : nt_ids.at(s.name));
    }
    all.push_back(std::move(cp));
  }

  // Drop productions that mention nonterminals deriving no terminal string,
  // so that every predicted item can be completed.
  const std::size_t n = nonterminal_names_.size();
  std::vector<char> productive(n, 0);
  for (bool changed = true; changed;) {
    changed = false;
    for (const auto& p : all) {
      if (productive[static_cast<std::size_t>(p.lhs)]) continue;
      bool ok = std::all_of(p.rhs.begin(), p.rhs.end(), [&](Symbol s) {
        return s < 0 || productive[static_cast<std::size_t>(s)];
      });
      if (ok) {
        productive[static_cast<std::size_t>(p.lhs)] = 1;
        changed = true;
      }
    }
  }
  productive_start_ = productive[static_cast<std::size_t>(augmented_start)] != 0;
  for (std::size_t i = 0; i < all.size(); ++i) {
    const auto& p = all[i];
    bool ok = std::all_of(p.rhs.begin(), p.rhs.end(), [&](Symbol s) {
      return s < 0 || productive[static_cast<std::size_t>(s)];
    });
    if (ok || i == 0) productions_.push_back(p);
  }

  by_lhs_.assign(n, {});
  for (std::size_t i = 0; i < productions_.size(); ++i) {
    if (i == 0 && !productive_start_) continue;
    by_lhs_[static_cast<std::size_t>(productions_[i].lhs)].push_back(static_cast<int>(i));
  }

  nullable_.assign(n, 0);
  for (bool changed = true; changed;) {
    changed = false;
    for (const auto& p : productions_) {
      if (nullable_[static_cast<std::size_t>(p.lhs)]) continue;
      bool ok = std::all_of(p.rhs.begin(), p.rhs.end(), [&](Symbol s) {
        return s >= 0 && nullable_[static_cast<std::size_t>(s)];
      });
      if (ok) {
        nullable_[static_cast<std::size_t>(p.lhs)] = 1;
        changed = true;
      }
    }
  }
}

std::span<const std::pair<Symbol, std::uint32_t>> EarleySet::waiting_on(Symbol s) const {
  auto lo = std::lower_bound(waiting.begin(), waiting.end(), s,
                             [](const auto& e, Symbol v) { return e.first < v; });
  auto hi = lo;
  while (hi != waiting.end() && hi->first == s) ++hi;
  return {lo, hi};
}

std::size_t SetCache::Hash::operator()(const Key& k) const {
  std::size_t h = 1469598103934665603ULL;
  for (const auto& [t, o] : k) {
    h ^= static_cast<std::size_t>(t) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    h ^= reinterpret_cast<std::uintptr_t>(o) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  }
  return h;
}

SetPtr SetCache::find(const Key& key) const {
  auto it = map_.find(key);
  return it == map_.end() ? nullptr : it->second;
}

void SetCache::insert(Key key, SetPtr set) { map_.emplace(std::move(key), std::move(set)); }

namespace {

struct ItemHash {
  std::size_t operator()(const Item& it) const {
    std::size_t h = it.production * 0x9e3779b1u + it.dot;
    return h ^ (reinterpret_cast<std::uintptr_t>(it.origin) * 0x9e3779b97f4a7c15ULL);
  }
};

// Open-addressing set of item indices into `items`; grows at half load.
class ItemIndex {
 public:
  explicit ItemIndex(const std::vector<Item>& items) : items_(items), slots_(64, kEmpty) {}

  bool insert(const Item& it) {
    if (2 * (items_.size() + 1) > slots_.size()) grow();
    std::size_t mask = slots_.size() - 1;
    for (std::size_t i = ItemHash{}(it) & mask;; i = (i + 1) & mask) {
      if (slots_[i] == kEmpty) {
        slots_[i] = static_cast<std::uint32_t>(items_.size());
        return true;
      }
      if (items_[slots_[i]] == it) return false;
    }
  }

 private:
  static constexpr std::uint32_t kEmpty = ~0u;

  void grow() {
    std::vector<std::uint32_t> old(slots_.size() * 2, kEmpty);
    old.swap(slots_);
    std::size_t mask = slots_.size() - 1;
    for (std::uint32_t idx : old) {
      if (idx == kEmpty) continue;
      std::size_t i = ItemHash{}(items_[idx]) & mask;
      while (slots_[i] != kEmpty) i = (i + 1) & mask;
      slots_[i] = idx;
    }
  }

  const std::vector<Item>& items_;
  std::vector<std::uint32_t> slots_;
};

// Runs prediction and completion to a fixpoint over `seeds`. Items whose
// origin is null refer to the set under construction.
SetPtr build_set(const CompiledGrammar& g, std::vector<Item> seeds) {
  auto set = std::make_shared<EarleySet>();
  EarleySet* self = set.get();
  auto& items = set->items;
  ItemIndex seen(items);
  std::vector<char> predicted(g.num_nonterminals(), 0);
  std::vector<char> expected(g.terminals().size(), 0);

  auto add = [&](Item it) {
    if (it.origin == nullptr) it.origin = self;
    if (seen.insert(it)) items.push_back(it);
  };
  for (const auto& s : seeds) add(s);

  const auto& prods = g.productions();
  for (std::size_t i = 0; i < items.size(); ++i) {
    const Item it = items[i];
    const auto& p = prods[it.production];
    if (it.dot < p.rhs.size()) {
      Symbol sym = p.rhs[it.dot];
      if (sym >= 0) {
        if (!predicted[static_cast<std::size_t>(sym)]) {
          predicted[static_cast<std::size_t>(sym)] = 1;
          for (int pi : g.productions_of(sym)) add({static_cast<std::uint32_t>(pi), 0, self});
        }
        if (g.nullable(sym)) add({it.production, it.dot + 1, it.origin});
      } else {
        expected[static_cast<std::size_t>(terminal_of(sym))] = 1;
      }
      continue;
    }
    if (it.production == 0) set->accepts = true;
    // Zero-width completions were already applied at prediction time.
    if (it.origin == self) continue;
    for (const auto& [_, idx] : it.origin->waiting_on(p.lhs)) {
      const Item& w = it.origin->items[idx];
      add({w.production, w.dot + 1, w.origin});
    }
  }

  for (std::size_t t = 0; t < expected.size(); ++t) {
    if (expected[t] || g.terminal(static_cast<int>(t)).ignored) {
      set->scan_terminals.push_back(static_cast<int>(t));
    }
  }
  for (std::uint32_t i = 0; i < items.size(); ++i) {
    const auto& p = prods[items[i].production];
    if (items[i].dot < p.rhs.size()) set->waiting.emplace_back(p.rhs[items[i].dot], i);
  }
  std::sort(set->waiting.begin(), set->waiting.end());

  std::vector<const EarleySet*> origins;
  for (const auto& it : items) {
    if (it.origin != self) origins.push_back(it.origin);
  }
  std::sort(origins.begin(), origins.end());
  origins.erase(std::unique(origins.begin(), origins.end()), origins.end());
  for (const auto* o : origins) set->keep_alive.push_back(o->shared_from_this());
  return set;
}

}  // namespace

SetPtr initial_set(const CompiledGrammar& g) {
  if (!g.productive_start()) return std::make_shared<EarleySet>();
  return build_set(g, {{0, 0, nullptr}});
}

void start_scans(const CompiledGrammar& g, const SetPtr& set, std::vector<Scan>& out) {
  for (int t : set->scan_terminals) {
    out.push_back({t, g.terminal(t).dfa->start(), set.get()});
  }
}

SetPtr step(const CompiledGrammar& g, std::span<const Scan> in, std::uint8_t byte,
            std::vector<Scan>& out, SetCache::Key& completions, SetCache* cache) {
  out.clear();
  completions.clear();
  for (const auto& s : in) {
    const auto& dfa = *g.terminal(s.terminal).dfa;
    regex::Dfa::State next = dfa.step(s.state, byte);
    if (next == regex::Dfa::kDead) continue;
    if (dfa.extensible(next)) out.push_back({s.terminal, next, s.origin});
    if (dfa.accepting(next)) completions.emplace_back(s.terminal, s.origin);
  }
  if (completions.empty()) return nullptr;

  // Terminals that matched the same span from the same origin collide: only
  // the highest priority (then earliest declared) one completes.
  if (completions.size() > 1) {
    std::sort(completions.begin(), completions.end(), [&](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second < b.second;
      const auto& ta = g.terminal(a.first);
      const auto& tb = g.terminal(b.first);
      if (ta.priority != tb.priority) return ta.priority > tb.priority;
      return ta.order < tb.order;
    });
    std::size_t w = 0;
    for (std::size_t r = 0; r < completions.size(); ++r) {
      if (r == 0 || completions[r].second != completions[w - 1].second) {
        completions[w++] = completions[r];
      }
    }
    completions.resize(w);
    std::sort(completions.begin(), completions.end());
  }

  SetPtr set = cache ? cache->find(completions) : nullptr;
  if (!set) {
    std::vector<Item> seeds;
    for (const auto& [t, origin] : completions) {
      for (const auto& [_, idx] : origin->waiting_on(terminal_symbol(t))) {
        const Item& w = origin->items[idx];
        seeds.push_back({w.production, w.dot + 1, w.origin});
      }
      if (g.terminal(t).ignored) {
        seeds.insert(seeds.end(), origin->items.begin(), origin->items.end());
      }
    }
    set = build_set(g, std::move(seeds));
    if (cache) cache->insert(completions, set);
  }
  start_scans(g, set, out);
  return set;
}

}  // namespace crane::earley
