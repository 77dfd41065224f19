#pragma once

#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

#include "hat/chat.hpp"
#include "hat/corpus.hpp"
#include "hat/embed.hpp"
#include "hat/tree.hpp"

namespace hat {

enum class AbstractStyle { summative, keyword };

struct AbstractionConfig {
  AbstractStyle style = AbstractStyle::summative;
  std::size_t summary_max_tokens = 100;
  std::size_t max_keywords = 20;
  // Prompt budget for the chat abstractor; larger child sets are summarized
  // in two halves and the halves merged. 0 disables the check.
  std::size_t max_prompt_tokens = 0;
};

// Produces one abstract text from a node's child texts.
class Abstractor {
 public:
  virtual ~Abstractor() = default;
  virtual std::string abstract(const std::vector<std::string>& child_texts) = 0;
};

// Deterministic stand-in for the chat abstractor so indexing runs offline:
// keyword mode ranks unigram/bigram phrases by TF-IDF against the corpus,
// summative mode keeps the first sentence of each child.
class OfflineAbstractor : public Abstractor {
 public:
  OfflineAbstractor(const AbstractionConfig& cfg,
                    const std::vector<Chunk>& corpus);
  std::string abstract(const std::vector<std::string>& child_texts) override;

 private:
  AbstractionConfig cfg_;
  std::unordered_map<std::string, std::size_t> df_;  // unigrams and bigrams
  std::size_t n_docs_ = 0;
};

// Renders the prompt template around the child texts, asks the client, and
// normalizes the reply per style.
class ChatAbstractor : public Abstractor {
 public:
  ChatAbstractor(const AbstractionConfig& cfg, ChatClient& client,
                 const std::string& template_path);
  std::string abstract(const std::vector<std::string>& child_texts) override;

 private:
  std::string abstract_guarded(const std::vector<std::string>& child_texts,
                               bool allow_split);

  AbstractionConfig cfg_;
  ChatClient& client_;
  std::string template_;
};

// unigrams + adjacent bigrams of the lowercased term sequence.
std::vector<std::string> phrase_candidates(const std::string& text);

// Drops a leading "Summary:" label (any case) and surrounding whitespace.
std::string strip_summary_prefix(const std::string& response);

// Longest sentence prefix within max_tokens; a single overlong sentence is
// cut at the token boundary instead.
std::string truncate_to_sentences(const std::string& text,
                                  std::size_t max_tokens);

// Comma/newline-separated phrases -> trimmed, case-insensitively
// deduplicated, capped, joined with bare commas.
std::string normalize_keyword_line(const std::string& response,
                                   std::size_t max_keywords);

// Keeps old phrases in place and appends unseen new ones, then caps.
std::string merge_keyword_lines(const std::string& old_line,
                                const std::string& new_line,
                                std::size_t max_keywords);

struct AbstractionStats {
  std::size_t calls = 0;       // abstractor invocations
  std::size_t abstracted = 0;  // nodes whose text changed
};

// Bottom-up abstraction pass. Fresh or stale abstract nodes get new text and
// a recomputed embedding; clean ones are skipped, so a rerun is free. Stale
// keyword abstracts merge instead of losing their accumulated phrases.
AbstractionStats abstract_tree(
    AbstractTree& t, Abstractor& abstractor, Embedder& embedder,
    const std::unordered_map<std::string, std::string>& chunk_texts,
    const AbstractionConfig& cfg);

}  // namespace hat
