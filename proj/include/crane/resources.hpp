// Grammars, machines and prompt templates compiled into the library.
#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "crane/grammar.hpp"

namespace crane {

/// Text of a bundled file such as "grammars/gsm.lark".
std::optional<std::string_view> bundled_resource(std::string_view path);
std::vector<std::string_view> bundled_resource_names();

/// Reads a file into a string; throws std::runtime_error when unreadable.
std::string read_file(const std::string& path);

/// Resolves a grammar by name or path:
///   gsm       the full GSM listing (answers wrapped in "<<" ">>")
///   gsm-expr  its expression body, rooted at `expr`
///   prover9   the Prover9 listing
/// Anything else is read from disk.
GrammarSpec load_grammar(std::string_view name_or_path);

}  // namespace crane
