#include "crane/resources.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <utility>

namespace crane {

namespace detail {
extern const std::pair<std::string_view, std::string_view> kResources[];
extern const std::size_t kNumResources;
}  // namespace detail

std::optional<std::string_view> bundled_resource(std::string_view path) {
  for (std::size_t i = 0; i < detail::kNumResources; ++i) {
    if (detail::kResources[i].first == path) return detail::kResources[i].second;
  }
  return std::nullopt;
}

std::vector<std::string_view> bundled_resource_names() {
  std::vector<std::string_view> out;
  for (std::size_t i = 0; i < detail::kNumResources; ++i) out.push_back(detail::kResources[i].first);
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

GrammarSpec load_grammar(std::string_view name_or_path) {
  if (name_or_path == "gsm") return parse_grammar_text(*bundled_resource("grammars/gsm.lark"));
  if (name_or_path == "gsm-expr") return select_start(load_grammar("gsm"), "expr");
  if (name_or_path == "prover9") return parse_grammar_text(*bundled_resource("grammars/prover9.lark"));
  return parse_grammar_text(read_file(std::string(name_or_path)));
}

}  // namespace crane
