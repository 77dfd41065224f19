#include <algorithm>
#include <cmath>
#include <queue>
#include <unordered_set>
#include <vector>

#include "hat/embed.hpp"
#include "hat/errors.hpp"
#include "hat/pairs.hpp"
#include "hat/rng.hpp"

namespace hat {

namespace {

struct Cand {
  float sim;
  std::uint32_t id;
};

// Total order used everywhere: higher similarity first, then smaller id, so
// every heap decision is deterministic.
bool better(const Cand& a, const Cand& b) {
  if (a.sim != b.sim) return a.sim > b.sim;
  return a.id < b.id;
}

struct PopsBest {
  bool operator()(const Cand& a, const Cand& b) const { return better(b, a); }
};
struct PopsWorst {
  bool operator()(const Cand& a, const Cand& b) const { return better(a, b); }
};

class Hnsw {
 public:
  Hnsw(const Embeddings& e, const HnswConfig& cfg)
      : e_(e), cfg_(cfg), rng_(cfg.seed),
        level_mult_(1.0 / std::log(static_cast<double>(cfg.M))) {
    nodes_.reserve(e.count());
    for (std::uint32_t i = 0; i < e.count(); ++i) insert(i);
  }

  // Nearest neighbors of row q, best first, q itself excluded.
  std::vector<std::uint32_t> topk(std::uint32_t q, std::size_t k) const {
    std::uint32_t ep = entry_;
    for (int lc = max_level_; lc >= 1; --lc) {
      ep = greedy_closest(e_.at(q), ep, lc);
    }
    const std::size_t ef =
        std::max<std::size_t>(static_cast<std::size_t>(cfg_.ef_search), k + 1);
    auto found = search_layer(e_.at(q), ep, ef, 0);
    std::vector<std::uint32_t> out;
    for (const Cand& c : found) {
      if (c.id == q) continue;
      out.push_back(c.id);
      if (out.size() == k) break;
    }
    return out;
  }

 private:
  struct Node {
    int level = 0;
    std::vector<std::vector<std::uint32_t>> neighbors;  // one list per level
  };

  int random_level() {
    double u = rng_.uniform();
    if (u <= 0.0) u = 0x1.0p-53;
    const int lvl = static_cast<int>(std::floor(-std::log(u) * level_mult_));
    return std::min(lvl, 30);
  }

  float sim_to(std::span<const float> q, std::uint32_t id) const {
    return cosine(q, e_.at(id));
  }

  std::uint32_t greedy_closest(std::span<const float> q, std::uint32_t start,
                               int layer) const {
    std::uint32_t cur = start;
    float cur_sim = sim_to(q, cur);
    bool moved = true;
    while (moved) {
      moved = false;
      for (std::uint32_t nb : nodes_[cur].neighbors[layer]) {
        const float s = sim_to(q, nb);
        if (s > cur_sim) {
          cur = nb;
          cur_sim = s;
          moved = true;
        }
      }
    }
    return cur;
  }

  // Best-first expansion keeping the ef best candidates seen; returns them
  // best first.
  std::vector<Cand> search_layer(std::span<const float> q, std::uint32_t ep,
                                 std::size_t ef, int layer) const {
    std::unordered_set<std::uint32_t> visited = {ep};
    std::priority_queue<Cand, std::vector<Cand>, PopsBest> frontier;
    std::priority_queue<Cand, std::vector<Cand>, PopsWorst> best;
    const Cand first{sim_to(q, ep), ep};
    frontier.push(first);
    best.push(first);
    while (!frontier.empty()) {
      const Cand c = frontier.top();
      frontier.pop();
      if (best.size() >= ef && better(best.top(), c)) break;
      for (std::uint32_t nb : nodes_[c.id].neighbors[layer]) {
        if (!visited.insert(nb).second) continue;
        const Cand cand{sim_to(q, nb), nb};
        if (best.size() < ef || better(cand, best.top())) {
          frontier.push(cand);
          best.push(cand);
          if (best.size() > ef) best.pop();
        }
      }
    }
    std::vector<Cand> out(best.size());
    for (std::size_t i = out.size(); i-- > 0;) {
      out[i] = best.top();
      best.pop();
    }
    return out;
  }

  void link(std::uint32_t from, std::uint32_t to, int layer,
            std::size_t cap) {
    auto& list = nodes_[from].neighbors[layer];
    list.push_back(to);
    if (list.size() <= cap) return;
    // Shrink to the cap closest neighbors.
    std::vector<Cand> scored;
    scored.reserve(list.size());
    for (std::uint32_t nb : list) scored.push_back({sim_to(e_.at(from), nb), nb});
    std::sort(scored.begin(), scored.end(), better);
    list.clear();
    for (std::size_t i = 0; i < cap; ++i) list.push_back(scored[i].id);
  }

  void insert(std::uint32_t id) {
    const int lvl = random_level();
    Node n;
    n.level = lvl;
    n.neighbors.resize(static_cast<std::size_t>(lvl) + 1);
    nodes_.push_back(std::move(n));
    if (max_level_ < 0) {
      entry_ = id;
      max_level_ = lvl;
      return;
    }
    auto q = e_.at(id);
    std::uint32_t ep = entry_;
    for (int lc = max_level_; lc > lvl; --lc) ep = greedy_closest(q, ep, lc);
    for (int lc = std::min(lvl, max_level_); lc >= 0; --lc) {
      auto cands = search_layer(
          q, ep, static_cast<std::size_t>(cfg_.ef_construction), lc);
      const std::size_t cap =
          lc == 0 ? static_cast<std::size_t>(2 * cfg_.M)
                  : static_cast<std::size_t>(cfg_.M);
      const std::size_t m =
          std::min(cands.size(), static_cast<std::size_t>(cfg_.M));
      for (std::size_t i = 0; i < m; ++i) {
        link(id, cands[i].id, lc, cap);
        link(cands[i].id, id, lc, cap);
      }
      ep = cands.front().id;
    }
    if (lvl > max_level_) {
      max_level_ = lvl;
      entry_ = id;
    }
  }

  const Embeddings& e_;
  HnswConfig cfg_;
  Rng rng_;
  double level_mult_;
  std::vector<Node> nodes_;
  std::uint32_t entry_ = 0;
  int max_level_ = -1;
};

}  // namespace

std::vector<SimilarPair> hnsw_pair_stream(const Embeddings& e, std::size_t k,
                                          const HnswConfig& cfg) {
  if (k == 0) throw UsageError("neighbor count k must be positive");
  if (cfg.M < 2) throw UsageError("graph degree M must be at least 2");
  const std::size_t n = e.count();
  if (n < 2) return {};
  if (k >= n - 1) return exact_pair_stream(e);

  Hnsw index(e, cfg);
  std::vector<SimilarPair> pairs;
  pairs.reserve(n * k);
  for (std::uint32_t i = 0; i < n; ++i) {
    for (std::uint32_t j : index.topk(i, k)) {
      const std::uint32_t a = std::min(i, j);
      const std::uint32_t b = std::max(i, j);
      pairs.push_back(SimilarPair{cosine(e.at(a), e.at(b)), a, b});
    }
  }
  std::sort(pairs.begin(), pairs.end(), pair_order);
  pairs.erase(std::unique(pairs.begin(), pairs.end(),
                          [](const SimilarPair& a, const SimilarPair& b) {
                            return a.i == b.i && a.j == b.j;
                          }),
              pairs.end());
  return pairs;
}

}  // namespace hat
