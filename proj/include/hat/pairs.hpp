#pragma once

#include <cstdint>
#include <vector>

#include "hat/embed.hpp"

namespace hat {

// One scored leaf pair; i < j always.
struct SimilarPair {
  float score;
  std::uint32_t i;
  std::uint32_t j;
};

// Descending by score; ties broken by (i, j) ascending so streams are fully
// deterministic.
inline bool pair_order(const SimilarPair& a, const SimilarPair& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.i != b.i) return a.i < b.i;
  return a.j < b.j;
}

// All n(n-1)/2 pairs sorted descending. Memory is O(n^2); fine at desk scale
// (n = 10,000 keeps the stream under 600 MB).
std::vector<SimilarPair> exact_pair_stream(const Embeddings& e);

struct HnswConfig {
  int M = 16;
  int ef_construction = 200;
  int ef_search = 64;
  std::uint64_t seed = 42;
};

// Approximate stream: the deduplicated union of each point's top-k neighbors
// from an HNSW graph, sorted like the exact stream. Falls back to exhaustive
// search when k >= n-1 (the result is then identical to the exact stream).
std::vector<SimilarPair> hnsw_pair_stream(const Embeddings& e, std::size_t k,
                                          const HnswConfig& cfg = {});

struct BucketConfig {
  double slack = 0.25;
  std::uint64_t seed = 42;
  int max_iters = 25;
};

// Recursive spherical 2-means partition: buckets are split until each holds
// at most ceil(n/b)*(1+slack) points. Buckets are disjoint, cover all rows,
// and are ordered by their smallest member index.
std::vector<std::vector<std::uint32_t>> bucket_partition(
    const Embeddings& e, std::size_t b, const BucketConfig& cfg = {});

// Union of per-bucket exact streams (within-bucket pairs only), globally
// sorted. Cross-bucket pairs never appear; downstream construction joins the
// resulting fragments explicitly.
std::vector<SimilarPair> bucketed_pair_stream(const Embeddings& e,
                                              std::size_t b,
                                              const BucketConfig& cfg = {});

}  // namespace hat
