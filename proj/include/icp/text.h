#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace icp {

// Unicode helpers. All strings are UTF-8.

std::string nfc(std::string_view text);

// NFC followed by full Unicode case folding.
std::string fold_case(std::string_view text);

// Removes combining marks (NFD, drop Mn, NFC): "mirándola" -> "mirandola".
std::string strip_diacritics(std::string_view text);

std::string to_lower(std::string_view text);

std::string trim(std::string_view text);

// Splits on any run of whitespace; no empty tokens.
std::vector<std::string> split_whitespace(std::string_view text);

std::vector<std::string> split(std::string_view text, char sep);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

bool starts_with(std::string_view s, std::string_view prefix);
bool ends_with(std::string_view s, std::string_view suffix);

// Number of Unicode code points.
std::size_t utf8_length(std::string_view text);

/// A maximal run of letters, digits and combining marks inside a string.
/// `begin`/`end` are byte offsets into the original text.
struct WordToken {
  std::string text;
  std::size_t begin = 0;
  std::size_t end = 0;
};

// Word tokenizer shared by the rule engines. Apostrophes, hyphens and all
// punctuation separate tokens; callers inspect the original text around
// `begin`/`end` when adjacency matters (elision, hyphenated clitics).
std::vector<WordToken> word_tokens(std::string_view text);

// True when the code point starting at `pos` is a letter, digit or mark.
bool is_word_char_at(std::string_view text, std::size_t pos);

// Byte offset of the code point preceding `pos` (pos must be > 0).
std::size_t previous_code_point(std::string_view text, std::size_t pos);

std::string to_hex(const unsigned char* data, std::size_t n);

}  // namespace icp
