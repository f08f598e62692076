#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace narrmem::text {

// Number of Unicode code points in a UTF-8 string (what a Python `len` sees).
std::size_t utf8_length(std::string_view s);

std::u32string decode_utf8(std::string_view s);
std::string encode_utf8(std::u32string_view s);

// ASCII punctuation and symbols, Latin-1 punctuation, the General
// Punctuation block (dashes, curly quotes, ellipsis) and CJK punctuation.
bool is_punctuation(char32_t c);
bool is_space(char32_t c);

std::string strip_punctuation(std::string_view s);
std::vector<std::string> split_whitespace(std::string_view s);
std::string trim(std::string_view s);
std::string to_lower_ascii(std::string_view s);

// Lowercased, punctuation-stripped tokens.
std::vector<std::string> words(std::string_view s);

// The fixed 50-word stopword list used by the offline mock providers.
std::span<const std::string_view> stopwords();
bool is_stopword(std::string_view lowered_word);

// words() minus stopwords.
std::vector<std::string> content_words(std::string_view s);

}  // namespace narrmem::text
