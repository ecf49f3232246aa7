#include "icp/text.h"

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include <stdexcept>

namespace icp {

namespace {

const icu::Normalizer2& nfc_instance() {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* n = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw std::runtime_error("ICU NFC normalizer unavailable");
  return *n;
}

const icu::Normalizer2& nfd_instance() {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* n = icu::Normalizer2::getNFDInstance(status);
  if (U_FAILURE(status)) throw std::runtime_error("ICU NFD normalizer unavailable");
  return *n;
}

icu::UnicodeString from_utf8(std::string_view text) {
  return icu::UnicodeString::fromUTF8(
      icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
}

std::string to_utf8(const icu::UnicodeString& u) {
  std::string out;
  u.toUTF8String(out);
  return out;
}

UChar32 code_point_at(std::string_view text, std::size_t pos, std::size_t* next) {
  int32_t i = static_cast<int32_t>(pos);
  UChar32 c;
  U8_NEXT(reinterpret_cast<const uint8_t*>(text.data()), i,
          static_cast<int32_t>(text.size()), c);
  if (next) *next = static_cast<std::size_t>(i);
  return c;
}

bool is_word_cp(UChar32 c) {
  if (c < 0) return false;
  if (u_isalnum(c)) return true;
  int8_t t = u_charType(c);
  return t == U_NON_SPACING_MARK || t == U_COMBINING_SPACING_MARK ||
         t == U_ENCLOSING_MARK;
}

}  // namespace

std::string nfc(std::string_view text) {
  UErrorCode status = U_ZERO_ERROR;
  icu::UnicodeString out = nfc_instance().normalize(from_utf8(text), status);
  if (U_FAILURE(status)) throw std::runtime_error("NFC normalization failed");
  return to_utf8(out);
}

std::string fold_case(std::string_view text) {
  UErrorCode status = U_ZERO_ERROR;
  icu::UnicodeString u = nfc_instance().normalize(from_utf8(text), status);
  if (U_FAILURE(status)) throw std::runtime_error("NFC normalization failed");
  u.foldCase();
  u = nfc_instance().normalize(u, status);
  return to_utf8(u);
}

std::string strip_diacritics(std::string_view text) {
  UErrorCode status = U_ZERO_ERROR;
  icu::UnicodeString d = nfd_instance().normalize(from_utf8(text), status);
  if (U_FAILURE(status)) throw std::runtime_error("NFD normalization failed");
  icu::UnicodeString kept;
  for (int32_t i = 0; i < d.length();) {
    UChar32 c = d.char32At(i);
    if (u_charType(c) != U_NON_SPACING_MARK) kept.append(c);
    i += U16_LENGTH(c);
  }
  return to_utf8(nfc_instance().normalize(kept, status));
}

std::string to_lower(std::string_view text) {
  icu::UnicodeString u = from_utf8(text);
  u.toLower();
  return to_utf8(u);
}

std::string trim(std::string_view text) {
  const char* ws = " \t\n\r\f\v";
  auto b = text.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  auto e = text.find_last_not_of(ws);
  return std::string(text.substr(b, e - b + 1));
}

std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  const char* ws = " \t\n\r\f\v";
  while (i < text.size()) {
    auto b = text.find_first_not_of(ws, i);
    if (b == std::string_view::npos) break;
    auto e = text.find_first_of(ws, b);
    if (e == std::string_view::npos) e = text.size();
    out.emplace_back(text.substr(b, e - b));
    i = e;
  }
  return out;
}

std::vector<std::string> split(std::string_view text, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto pos = text.find(sep, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(text.substr(start));
      break;
    }
    out.emplace_back(text.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out.append(sep);
    out.append(parts[i]);
  }
  return out;
}

bool starts_with(std::string_view s, std::string_view prefix) {
  return s.substr(0, prefix.size()) == prefix;
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() &&
         s.substr(s.size() - suffix.size()) == suffix;
}

std::size_t utf8_length(std::string_view text) {
  std::size_t n = 0;
  for (unsigned char c : text)
    if ((c & 0xC0) != 0x80) ++n;
  return n;
}

bool is_word_char_at(std::string_view text, std::size_t pos) {
  if (pos >= text.size()) return false;
  return is_word_cp(code_point_at(text, pos, nullptr));
}

std::size_t previous_code_point(std::string_view text, std::size_t pos) {
  std::size_t p = pos;
  while (p > 0) {
    --p;
    if ((static_cast<unsigned char>(text[p]) & 0xC0) != 0x80) break;
  }
  return p;
}

std::vector<WordToken> word_tokens(std::string_view text) {
  std::vector<WordToken> out;
  std::size_t i = 0;
  while (i < text.size()) {
    std::size_t next = i;
    UChar32 c = code_point_at(text, i, &next);
    if (!is_word_cp(c)) {
      i = next;
      continue;
    }
    std::size_t begin = i;
    std::size_t end = next;
    while (end < text.size()) {
      std::size_t n2 = end;
      UChar32 c2 = code_point_at(text, end, &n2);
      if (!is_word_cp(c2)) break;
      end = n2;
    }
    out.push_back({std::string(text.substr(begin, end - begin)), begin, end});
    i = end;
  }
  return out;
}

std::string to_hex(const unsigned char* data, std::size_t n) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  out.reserve(n * 2);
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(digits[data[i] >> 4]);
    out.push_back(digits[data[i] & 0xF]);
  }
  return out;
}

}  // namespace icp
