#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "hat/corpus.hpp"

namespace hat {

struct Bm25Config {
  double k1 = 1.5;
  double b = 0.75;
  bool strip_stopwords = false;  // off by default; exact-match queries matter
};

// Okapi BM25 inverted index over chunk texts, tokenized exactly like the
// rest of the pipeline (lowercased alnum runs, no stemming).
struct SparseIndex {
  Bm25Config cfg;
  std::vector<std::string> chunk_ids;     // position = internal doc index
  std::vector<std::uint32_t> doc_len;     // token count per doc (post filter)
  double avgdl = 0.0;
  // term -> (doc index, term frequency), doc indices ascending.
  std::map<std::string, std::vector<std::pair<std::uint32_t, std::uint32_t>>>
      postings;
};

struct SparseHit {
  std::uint32_t index = 0;  // internal doc index
  std::string chunk_id;
  double score = 0.0;
};

SparseIndex build_sparse(const std::vector<Chunk>& chunks,
                         const Bm25Config& cfg = {});

// Top-k by BM25 with idf = ln(1 + (N - df + 0.5)/(df + 0.5)). Only documents
// containing at least one query term are returned; ties break toward the
// smaller chunk index. Repeated query terms count once.
std::vector<SparseHit> sparse_search(const SparseIndex& idx,
                                     const std::string& query, std::size_t k);

void save_sparse(const std::string& path, const SparseIndex& idx);
SparseIndex load_sparse(const std::string& path);

}  // namespace hat
