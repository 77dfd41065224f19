#include "hat/tokenize.hpp"

#include <array>
#include <cctype>
#include <unordered_set>

namespace hat {

namespace {

bool is_word_byte(unsigned char c) { return std::isalnum(c) != 0; }

bool is_space_byte(unsigned char c) { return std::isspace(c) != 0; }

// Trailing-period abbreviations that do not end a sentence.
const std::unordered_set<std::string>& abbreviations() {
  static const std::unordered_set<std::string> kAbbrev = {
      "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st",  "vs",
      "etc", "fig", "eg", "ie", "al", "inc", "ltd", "co", "no",
      "vol", "ca", "approx", "dept", "est", "min", "max", "mt",
  };
  return kAbbrev;
}

}  // namespace

std::vector<Token> word_tokens(std::string_view text) {
  std::vector<Token> out;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    if (!is_word_byte(static_cast<unsigned char>(text[i]))) {
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    while (j < n && is_word_byte(static_cast<unsigned char>(text[j]))) ++j;
    out.push_back(Token{std::string(text.substr(i, j - i)), i, j});
    i = j;
  }
  return out;
}

std::vector<std::string> terms(std::string_view text) {
  std::vector<std::string> out;
  for (const Token& t : word_tokens(text)) out.push_back(to_lower(t.text));
  return out;
}

std::size_t count_tokens(std::string_view text) {
  std::size_t count = 0;
  bool in_word = false;
  for (unsigned char c : text) {
    if (is_word_byte(c)) {
      if (!in_word) ++count;
      in_word = true;
    } else {
      in_word = false;
    }
  }
  return count;
}

namespace {

std::string_view trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && is_space_byte(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && is_space_byte(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

// The word immediately before byte position `pos` (exclusive), lowercased.
std::string word_before(std::string_view text, std::size_t pos) {
  std::size_t e = pos;
  std::size_t b = e;
  while (b > 0 && is_word_byte(static_cast<unsigned char>(text[b - 1]))) --b;
  return to_lower(text.substr(b, e - b));
}

}  // namespace

std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  const std::size_t n = text.size();
  std::size_t start = 0;
  std::size_t i = 0;
  auto flush = [&](std::size_t end) {
    std::string_view s = trim(text.substr(start, end - start));
    if (!s.empty()) out.emplace_back(s);
    start = end;
  };
  while (i < n) {
    char c = text[i];
    if (c == '.' || c == '?' || c == '!') {
      std::size_t j = i;
      while (j < n && (text[j] == '.' || text[j] == '?' || text[j] == '!')) ++j;
      const bool at_end = (j == n);
      const bool ws_next =
          !at_end && is_space_byte(static_cast<unsigned char>(text[j]));
      if (at_end || ws_next) {
        bool split = true;
        // A lone '.' after an abbreviation or a single letter (an initial)
        // does not terminate the sentence.
        if (j - i == 1 && c == '.') {
          const std::string w = word_before(text, i);
          if (w.size() == 1 || abbreviations().count(w) > 0) split = false;
        }
        if (split) {
          flush(j);
          i = j;
          continue;
        }
      }
      i = j;
      continue;
    }
    ++i;
  }
  flush(n);
  return out;
}

std::vector<std::string> split_paragraphs(std::string_view text) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  std::string current;
  auto flush = [&] {
    std::string_view t = trim(current);
    if (!t.empty()) out.emplace_back(t);
    current.clear();
  };
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    if (trim(line).empty()) {
      flush();
    } else {
      if (!current.empty()) current += '\n';
      current.append(line);
    }
    if (eol == text.size()) break;
    pos = eol + 1;
  }
  flush();
  return out;
}

std::string collapse_whitespace(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (unsigned char c : text) {
    if (is_space_byte(c)) {
      pending_space = !out.empty();
    } else {
      if (pending_space) out += ' ';
      pending_space = false;
      out += static_cast<char>(c);
    }
  }
  return out;
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

}  // namespace hat
