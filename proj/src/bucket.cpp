#include <algorithm>
#include <cmath>
#include <vector>

#include "hat/embed.hpp"
#include "hat/errors.hpp"
#include "hat/pairs.hpp"
#include "hat/rng.hpp"

namespace hat {

namespace {

double centroid_sim(const std::vector<double>& mu, double mu_norm,
                    std::span<const float> x) {
  if (mu_norm == 0.0) return -2.0;  // worse than any cosine
  double d = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) d += mu[i] * x[i];
  return d / mu_norm;
}

// Index of the member least similar to `to`, ties toward the smaller index.
std::size_t farthest_member(const Embeddings& e,
                            const std::vector<std::uint32_t>& idx,
                            std::span<const float> to) {
  std::size_t best = 0;
  float best_sim = cosine(e.at(idx[0]), to);
  for (std::size_t i = 1; i < idx.size(); ++i) {
    const float s = cosine(e.at(idx[i]), to);
    if (s < best_sim) {
      best_sim = s;
      best = i;
    }
  }
  return best;
}

void halve(const std::vector<std::uint32_t>& idx,
           std::vector<std::uint32_t>& left,
           std::vector<std::uint32_t>& right) {
  const std::size_t cut = (idx.size() + 1) / 2;
  left.assign(idx.begin(), idx.begin() + cut);
  right.assign(idx.begin() + cut, idx.end());
}

// Spherical 2-means over the rows named by idx. Degenerate geometry (all
// points alike, a side that cannot be repopulated) falls back to an index
// halving so splitting always makes progress.
void two_means(const Embeddings& e, const std::vector<std::uint32_t>& idx,
               Rng& rng, int max_iters, std::vector<std::uint32_t>& left,
               std::vector<std::uint32_t>& right) {
  const std::size_t m = idx.size();
  const std::size_t dim = e.dim;

  const std::uint32_t seed0 = idx[rng.below(m)];
  const std::size_t far = farthest_member(e, idx, e.at(seed0));
  const std::uint32_t seed1 = idx[far];
  if (seed1 == seed0 || cosine(e.at(seed0), e.at(seed1)) >= 1.0f) {
    halve(idx, left, right);  // every point looks the same
    return;
  }

  std::vector<std::vector<double>> mu(2, std::vector<double>(dim));
  double norm[2];
  auto set_centroid = [&](int side, std::span<const float> v) {
    for (std::size_t i = 0; i < dim; ++i) mu[side][i] = v[i];
    norm[side] = 1.0;  // rows are unit length
  };
  set_centroid(0, e.at(seed0));
  set_centroid(1, e.at(seed1));

  std::vector<int> assign(m, -1);
  for (int iter = 0; iter < max_iters; ++iter) {
    bool changed = false;
    left.clear();
    right.clear();
    for (std::size_t i = 0; i < m; ++i) {
      const auto x = e.at(idx[i]);
      const int side =
          centroid_sim(mu[0], norm[0], x) >= centroid_sim(mu[1], norm[1], x)
              ? 0
              : 1;
      if (side != assign[i]) {
        assign[i] = side;
        changed = true;
      }
      (side == 0 ? left : right).push_back(idx[i]);
    }
    if (left.empty() || right.empty()) {
      // Re-seed the empty side with the point farthest from the full side's
      // centroid, then keep iterating.
      auto& full = left.empty() ? right : left;
      const int empty_side = left.empty() ? 0 : 1;
      const int full_side = 1 - empty_side;
      std::vector<float> c(dim);
      for (std::size_t i = 0; i < dim; ++i) {
        c[i] = static_cast<float>(mu[full_side][i] / norm[full_side]);
      }
      set_centroid(empty_side, e.at(full[farthest_member(e, full, c)]));
      std::fill(assign.begin(), assign.end(), -1);
      continue;
    }
    if (!changed) break;
    for (int side = 0; side < 2; ++side) {
      auto& members = side == 0 ? left : right;
      std::fill(mu[side].begin(), mu[side].end(), 0.0);
      for (std::uint32_t id : members) {
        const auto x = e.at(id);
        for (std::size_t i = 0; i < dim; ++i) mu[side][i] += x[i];
      }
      double s = 0.0;
      for (double v : mu[side]) s += v * v;
      norm[side] = std::sqrt(s);
    }
  }
  if (left.empty() || right.empty()) halve(idx, left, right);
}

}  // namespace

std::vector<std::vector<std::uint32_t>> bucket_partition(
    const Embeddings& e, std::size_t b, const BucketConfig& cfg) {
  if (b == 0) throw UsageError("bucket count must be positive");
  const std::size_t n = e.count();
  if (n == 0) return {};
  const std::size_t target = (n + b - 1) / b;
  const std::size_t cap = std::max<std::size_t>(
      1, static_cast<std::size_t>(
             std::floor(static_cast<double>(target) * (1.0 + cfg.slack))));

  Rng rng(cfg.seed);
  std::vector<std::vector<std::uint32_t>> done;
  std::vector<std::vector<std::uint32_t>> work;
  {
    std::vector<std::uint32_t> all(n);
    for (std::uint32_t i = 0; i < n; ++i) all[i] = i;
    work.push_back(std::move(all));
  }
  while (!work.empty()) {
    std::vector<std::uint32_t> cur = std::move(work.back());
    work.pop_back();
    if (cur.size() <= cap) {
      done.push_back(std::move(cur));
      continue;
    }
    std::vector<std::uint32_t> left, right;
    two_means(e, cur, rng, cfg.max_iters, left, right);
    work.push_back(std::move(right));
    work.push_back(std::move(left));
  }
  for (auto& bucket : done) std::sort(bucket.begin(), bucket.end());
  std::sort(done.begin(), done.end(),
            [](const auto& a, const auto& b2) { return a.front() < b2.front(); });
  return done;
}

std::vector<SimilarPair> bucketed_pair_stream(const Embeddings& e,
                                              std::size_t b,
                                              const BucketConfig& cfg) {
  std::vector<SimilarPair> pairs;
  for (const auto& bucket : bucket_partition(e, b, cfg)) {
    for (std::size_t a = 0; a < bucket.size(); ++a) {
      for (std::size_t c = a + 1; c < bucket.size(); ++c) {
        const std::uint32_t i = bucket[a];
        const std::uint32_t j = bucket[c];
        pairs.push_back(SimilarPair{cosine(e.at(i), e.at(j)), i, j});
      }
    }
  }
  std::sort(pairs.begin(), pairs.end(), pair_order);
  return pairs;
}

}  // namespace hat
