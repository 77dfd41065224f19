#include "hat/retrieve.hpp"

#include <algorithm>
#include <stdexcept>
#include <utility>

#include "hat/embed.hpp"
#include "hat/errors.hpp"
#include "hat/tokenize.hpp"

namespace hat {

namespace {

bool hit_before(const ScoredChunk& a, const ScoredChunk& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.chunk_id < b.chunk_id;
}

double score_node(const AbstractTree& t, NodeId id,
                  std::span<const float> qvec) {
  const TreeNode& n = t.at(id);
  if (!n.has_embedding) {
    throw DataError("node " + std::to_string(id) +
                    " has no embedding; abstract the tree before searching");
  }
  if (n.embedding.size() != qvec.size()) {
    throw DataError("query dimension " + std::to_string(qvec.size()) +
                    " does not match index dimension " +
                    std::to_string(n.embedding.size()));
  }
  return static_cast<double>(cosine(qvec, n.embedding));
}

// Keep the `keep` best node ids by query similarity; ties toward smaller id.
std::vector<NodeId> prune_layer(const AbstractTree& t,
                                const std::vector<NodeId>& layer,
                                std::span<const float> qvec,
                                std::size_t keep) {
  std::vector<std::pair<double, NodeId>> scored;
  scored.reserve(layer.size());
  for (NodeId id : layer) scored.push_back({score_node(t, id, qvec), id});
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<NodeId> out;
  out.reserve(keep);
  for (std::size_t i = 0; i < keep && i < scored.size(); ++i) {
    out.push_back(scored[i].second);
  }
  return out;
}

}  // namespace

TreeSearchResult tree_search(const AbstractTree& t, std::span<const float> qvec,
                             std::size_t k, std::size_t beam_k) {
  if (t.root == kNoNode) throw DataError("cannot search an empty tree");
  if (k == 0) throw UsageError("retrieval depth k must be positive");
  if (beam_k == 0) beam_k = k;

  TreeSearchResult res;
  std::vector<NodeId> frontier = {t.root};
  res.visited = 1;
  while (!t.at(frontier.front()).is_leaf) {
    std::vector<NodeId> next;
    for (NodeId id : frontier) {
      const auto& kids = t.at(id).children;
      next.insert(next.end(), kids.begin(), kids.end());
    }
    res.visited += next.size();
    // Leaves are ranked below; abstract layers that fit in the beam pass
    // through unscored so they never need embeddings.
    if (!t.at(next.front()).is_leaf && next.size() > beam_k) {
      next = prune_layer(t, next, qvec, beam_k);
    }
    frontier = std::move(next);
  }

  std::vector<ScoredChunk> hits;
  hits.reserve(frontier.size());
  for (NodeId id : frontier) {
    hits.push_back(ScoredChunk{t.at(id).chunk_id, score_node(t, id, qvec),
                               kSourceTree});
  }
  std::sort(hits.begin(), hits.end(), hit_before);
  if (hits.size() > k) hits.resize(k);
  res.hits = std::move(hits);
  return res;
}

std::vector<ScoredChunk> flat_search(const AbstractTree& t,
                                     std::span<const float> qvec,
                                     std::size_t k) {
  if (k == 0) throw UsageError("retrieval depth k must be positive");
  std::vector<ScoredChunk> hits;
  for (const TreeNode& n : t.nodes) {
    if (!n.is_leaf) continue;
    hits.push_back(
        ScoredChunk{n.chunk_id, score_node(t, n.id, qvec), kSourceTree});
  }
  std::sort(hits.begin(), hits.end(), hit_before);
  if (hits.size() > k) hits.resize(k);
  return hits;
}

std::vector<ScoredChunk> rrf_fuse(
    const std::vector<std::vector<ScoredChunk>>& lists, double rrf_constant,
    std::size_t final_k) {
  std::unordered_map<std::string, ScoredChunk> acc;
  for (const auto& list : lists) {
    for (std::size_t r = 0; r < list.size(); ++r) {
      ScoredChunk& e = acc[list[r].chunk_id];
      e.chunk_id = list[r].chunk_id;
      e.score += 1.0 / (rrf_constant + static_cast<double>(r + 1));
      e.sources |= list[r].sources;
    }
  }
  std::vector<ScoredChunk> out;
  out.reserve(acc.size());
  for (auto& [_, e] : acc) out.push_back(std::move(e));
  std::sort(out.begin(), out.end(), hit_before);
  if (out.size() > final_k) out.resize(final_k);
  return out;
}

RetrieveResult hybrid_retrieve(
    const AbstractTree& t, const SparseIndex& sparse,
    const std::unordered_map<std::string, std::string>& chunk_texts,
    std::span<const float> qvec, const std::string& query_text,
    const FusionConfig& cfg, const RerankFn& rerank) {
  if (cfg.strategy == FusionStrategy::rerank && !rerank) {
    throw UsageError("rerank fusion requires a reranker");
  }
  RetrieveResult out;
  out.tree = tree_search(t, qvec, cfg.per_retriever_k);
  for (const SparseHit& h : sparse_search(sparse, query_text,
                                          cfg.per_retriever_k)) {
    out.sparse_hits.push_back(ScoredChunk{h.chunk_id, h.score, kSourceSparse});
  }
  const std::vector<std::vector<ScoredChunk>> lists = {out.tree.hits,
                                                       out.sparse_hits};
  if (cfg.strategy == FusionStrategy::rrf) {
    out.chunks = rrf_fuse(lists, cfg.rrf_constant, cfg.final_k);
    return out;
  }

  // Candidate union in first-seen order: dense arm first, then sparse.
  std::vector<ScoredChunk> candidates;
  for (const auto& list : lists) {
    for (const ScoredChunk& h : list) {
      auto it = std::find_if(candidates.begin(), candidates.end(),
                             [&](const ScoredChunk& c) {
                               return c.chunk_id == h.chunk_id;
                             });
      if (it == candidates.end()) {
        candidates.push_back(h);
      } else {
        it->sources |= h.sources;
      }
    }
  }
  std::vector<std::string> passages;
  passages.reserve(candidates.size());
  for (const ScoredChunk& c : candidates) {
    auto it = chunk_texts.find(c.chunk_id);
    if (it == chunk_texts.end()) {
      throw DataError("no text available for chunk " + c.chunk_id);
    }
    passages.push_back(it->second);
  }
  try {
    std::vector<double> scores = rerank(query_text, passages);
    if (scores.size() != passages.size()) {
      throw std::runtime_error("reranker returned " +
                               std::to_string(scores.size()) + " scores for " +
                               std::to_string(passages.size()) + " passages");
    }
    std::vector<ScoredChunk> ranked;
    ranked.reserve(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      ranked.push_back(ScoredChunk{candidates[i].chunk_id, scores[i],
                                   candidates[i].sources});
    }
    std::sort(ranked.begin(), ranked.end(), hit_before);
    if (ranked.size() > cfg.final_k) ranked.resize(cfg.final_k);
    out.chunks = std::move(ranked);
  } catch (const std::exception&) {
    out.used_fallback = true;
    out.chunks = rrf_fuse(lists, cfg.rrf_constant, cfg.final_k);
  }
  return out;
}

void ScoreLedger::add(const std::vector<ScoredChunk>& hits) {
  for (const ScoredChunk& h : hits) {
    auto it = best_.find(h.chunk_id);
    if (it == best_.end()) {
      best_.emplace(h.chunk_id, h);
    } else {
      it->second.score = std::max(it->second.score, h.score);
      it->second.sources |= h.sources;
    }
  }
}

std::vector<ScoredChunk> ScoreLedger::top(std::size_t k) const {
  std::vector<ScoredChunk> out;
  out.reserve(best_.size());
  for (const auto& [_, e] : best_) out.push_back(e);
  std::sort(out.begin(), out.end(), hit_before);
  if (out.size() > k) out.resize(k);
  return out;
}

bool ScoreLedger::contains(const std::string& chunk_id) const {
  return best_.count(chunk_id) > 0;
}

std::vector<double> lexical_overlap_rerank(
    const std::string& query, const std::vector<std::string>& passages) {
  std::vector<std::string> qterms = terms(query);
  std::sort(qterms.begin(), qterms.end());
  qterms.erase(std::unique(qterms.begin(), qterms.end()), qterms.end());
  std::vector<double> scores;
  scores.reserve(passages.size());
  for (const std::string& p : passages) {
    if (qterms.empty()) {
      scores.push_back(0.0);
      continue;
    }
    std::vector<std::string> pterms = terms(p);
    std::sort(pterms.begin(), pterms.end());
    std::size_t hit = 0;
    for (const std::string& q : qterms)
      if (std::binary_search(pterms.begin(), pterms.end(), q)) ++hit;
    scores.push_back(static_cast<double>(hit) /
                     static_cast<double>(qterms.size()));
  }
  return scores;
}

}  // namespace hat
