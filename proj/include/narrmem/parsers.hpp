#pragma once

#include <set>
#include <string>
#include <vector>

#include "narrmem/corpus.hpp"

// Completion parsers. All are pure and throw ParseError (carrying the raw
// text) when the completion has no usable structure.
namespace narrmem::parse {

// The last "(a, b, ...)" or "[a, b, ...]" list in the text, filtered to 1..L.
// An empty list "()" is a valid answer and yields the empty set.
std::set<int> scored_set(const std::string& completion, int L);

// Same list rule, order kept, repeats collapsed to their first occurrence.
std::vector<int> ordered_sequence(const std::string& completion, int L);

// Lines labelled "k.5" (0 <= k <= L), sorted by label. Integer-labelled lines
// are ignored. Throws InsufficientLuresError below L/2 lures.
std::vector<Lure> lures(const std::string& completion, int L);

// Lines "n. text" numbered 1, 2, 3, ... with the numbering stripped.
std::vector<std::string> numbered_clauses(const std::string& completion);

}  // namespace narrmem::parse
