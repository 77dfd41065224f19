#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace hat {

// One word token with its byte span in the source text.
struct Token {
  std::string text;
  std::size_t begin = 0;  // byte offset of first char
  std::size_t end = 0;    // one past last char
};

// Word tokenizer shared by chunking, the sparse index, the hashing embedder
// and the offline abstractor: maximal runs of alphanumeric bytes; everything
// else (whitespace and punctuation) separates tokens and is never a token.
std::vector<Token> word_tokens(std::string_view text);

// Lowercased token texts (ASCII lowercasing; non-ASCII bytes pass through).
std::vector<std::string> terms(std::string_view text);

std::size_t count_tokens(std::string_view text);

// Rule-based sentence splitter: a sentence ends at a run of [.?!] followed by
// whitespace or end of text, unless the preceding word is a known
// abbreviation or a single letter (an initial). Returns trimmed sentences;
// trailing text without a terminator forms a final sentence.
std::vector<std::string> split_sentences(std::string_view text);

// Paragraphs = maximal runs of non-blank lines, trimmed.
std::vector<std::string> split_paragraphs(std::string_view text);

// Collapse all whitespace runs to single spaces and trim the ends.
std::string collapse_whitespace(std::string_view text);

std::string to_lower(std::string_view s);

}  // namespace hat
