#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "hat/sparse.hpp"
#include "hat/tree.hpp"

namespace hat {

// Where a fused hit came from, or-ed together.
constexpr std::uint8_t kSourceTree = 1;
constexpr std::uint8_t kSourceSparse = 2;

struct ScoredChunk {
  std::string chunk_id;
  double score = 0.0;
  std::uint8_t sources = 0;
};

struct TreeSearchResult {
  std::vector<ScoredChunk> hits;  // score desc, chunk_id asc on ties
  std::size_t visited = 0;        // nodes considered during the descent
};

// Top-down beam search: keep the beam_k most query-similar nodes per
// abstract layer, then the k best leaves among the survivors' children.
// A layer that already fits in the beam passes through unscored, so trees
// without abstract embeddings still support exhaustive search; pruning a
// node with no embedding raises DataError. beam_k == 0 means beam_k = k.
TreeSearchResult tree_search(const AbstractTree& t, std::span<const float> qvec,
                             std::size_t k, std::size_t beam_k = 0);

// Exhaustive cosine scan over the leaves; the baseline tree_search with
// k == leaf_count must match exactly.
std::vector<ScoredChunk> flat_search(const AbstractTree& t,
                                     std::span<const float> qvec,
                                     std::size_t k);

enum class FusionStrategy { rrf, rerank };

struct FusionConfig {
  FusionStrategy strategy = FusionStrategy::rrf;
  double rrf_constant = 60.0;
  std::size_t per_retriever_k = 10;
  std::size_t final_k = 5;
};

// query, passage texts -> one relevance score per passage.
using RerankFn = std::function<std::vector<double>(
    const std::string&, const std::vector<std::string>&)>;

// Deterministic reranker stand-in: each passage scores the fraction of the
// query's distinct terms it contains. Ties preserve the fused pre-order.
std::vector<double> lexical_overlap_rerank(
    const std::string& query, const std::vector<std::string>& passages);

// Reciprocal-rank fusion over ranked lists: score = sum 1/(c + rank) with
// rank starting at 1. Sources accumulate; output is score desc, chunk_id asc.
std::vector<ScoredChunk> rrf_fuse(
    const std::vector<std::vector<ScoredChunk>>& lists, double rrf_constant,
    std::size_t final_k);

struct RetrieveResult {
  std::vector<ScoredChunk> chunks;           // fused top final_k
  TreeSearchResult tree;                     // raw dense arm
  std::vector<ScoredChunk> sparse_hits;      // raw sparse arm
  bool used_fallback = false;                // reranker failed, fell back to rrf
};

// Dense tree arm + BM25 arm, fused per cfg. chunk_texts supplies passages to
// the reranker; any reranker failure (throw or wrong-length response) falls
// back to reciprocal-rank fusion and sets used_fallback.
RetrieveResult hybrid_retrieve(
    const AbstractTree& t, const SparseIndex& sparse,
    const std::unordered_map<std::string, std::string>& chunk_texts,
    std::span<const float> qvec, const std::string& query_text,
    const FusionConfig& cfg = {}, const RerankFn& rerank = nullptr);

// Best score seen per chunk across successive retrieval steps.
class ScoreLedger {
 public:
  void add(const std::vector<ScoredChunk>& hits);
  std::vector<ScoredChunk> top(std::size_t k) const;  // score desc, id asc
  bool contains(const std::string& chunk_id) const;
  std::size_t size() const { return best_.size(); }

 private:
  std::unordered_map<std::string, ScoredChunk> best_;
};

}  // namespace hat
