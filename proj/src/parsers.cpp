#include "narrmem/parsers.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <map>
#include <optional>
#include <regex>

#include "narrmem/errors.hpp"
#include "narrmem/io.hpp"
#include "narrmem/text.hpp"

namespace narrmem::parse {

namespace {

std::optional<std::vector<long>> last_list(const std::string& text) {
  static const std::regex list_re(R"([\(\[]\s*(\d+(?:\s*,\s*\d+)*)?\s*,?\s*[\)\]])");
  std::optional<std::vector<long>> found;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), list_re);
       it != std::sregex_iterator(); ++it) {
    const std::string m = it->str();
    const char open = m.front(), close = m.back();
    if ((open == '(') != (close == ')')) continue;  // "(1, 2]" is not a list
    std::vector<long> values;
    const std::string body = (*it)[1].str();
    const char* p = body.data();
    const char* end = p + body.size();
    while (p < end) {
      if (std::isdigit(static_cast<unsigned char>(*p))) {
        long v = 0;
        auto [next, ec] = std::from_chars(p, end, v);
        if (ec != std::errc()) v = -1;  // absurdly long digit run: out of range
        values.push_back(v);
        p = next;
      } else {
        ++p;
      }
    }
    found = std::move(values);
  }
  return found;
}

std::vector<int> in_range_list(const std::string& completion, int L) {
  if (L < 1) throw InvalidArgument("clause count must be >= 1");
  auto list = last_list(completion);
  if (!list) throw ParseError("no terminal list of clause numbers in completion", completion);
  std::vector<int> out;
  for (long v : *list) {
    if (v >= 1 && v <= L) out.push_back(static_cast<int>(v));
  }
  if (out.empty() && !list->empty()) {
    throw ParseError("every listed clause number is outside 1.." + std::to_string(L),
                     completion);
  }
  return out;
}

int to_int(const std::string& digits) {
  int v = -1;
  auto [_, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v);
  return ec == std::errc() ? v : -1;
}

}  // namespace

std::set<int> scored_set(const std::string& completion, int L) {
  const auto v = in_range_list(completion, L);
  return {v.begin(), v.end()};
}

std::vector<int> ordered_sequence(const std::string& completion, int L) {
  std::vector<int> out;
  for (int v : in_range_list(completion, L)) {
    if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
  }
  return out;
}

std::vector<Lure> lures(const std::string& completion, int L) {
  static const std::regex lure_re(R"(^\s*(\d+)\.5\s*[\.\):]?\s+(.*\S)\s*$)");
  std::map<int, std::string> by_k;
  for (const auto& line : io::split_lines(completion)) {
    std::smatch m;
    if (!std::regex_match(line, m, lure_re)) continue;
    const int k = to_int(m[1].str());
    if (k < 0 || k > L) continue;
    by_k.emplace(k, m[2].str());  // a repeated label keeps its first text
  }
  if (static_cast<double>(by_k.size()) < L / 2.0) {
    throw InsufficientLuresError("parsed " + std::to_string(by_k.size()) +
                                 " lures, need at least " + std::to_string((L + 1) / 2));
  }
  std::vector<Lure> out;
  for (auto& [k, t] : by_k) out.push_back({std::to_string(k) + ".5", t});
  return out;
}

std::vector<std::string> numbered_clauses(const std::string& completion) {
  // "12. text" but not "12.5. text"
  static const std::regex line_re(R"(^\s*(\d+)\.(?!\d)\s*(.*?)\s*$)");
  std::vector<std::string> out;
  for (const auto& line : io::split_lines(completion)) {
    std::smatch m;
    if (!std::regex_match(line, m, line_re)) continue;
    const int n = to_int(m[1].str());
    if (n != static_cast<int>(out.size()) + 1) {
      throw ParseError("clause numbering jumps from " + std::to_string(out.size()) + " to " +
                           std::to_string(n),
                       completion);
    }
    out.push_back(m[2].str());
  }
  if (out.empty()) throw ParseError("no numbered clauses in completion", completion);
  return out;
}

}  // namespace narrmem::parse
