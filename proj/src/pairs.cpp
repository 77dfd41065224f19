#include "hat/pairs.hpp"

#include <algorithm>

#include "hat/errors.hpp"

namespace hat {

std::vector<SimilarPair> exact_pair_stream(const Embeddings& e) {
  const std::size_t n = e.count();
  if (n < 2) return {};
  std::vector<SimilarPair> pairs;
  pairs.reserve(n * (n - 1) / 2);
  for (std::uint32_t i = 0; i + 1 < n; ++i) {
    const float* a = e.row(i);
    for (std::uint32_t j = i + 1; j < n; ++j) {
      const float s = dot({a, e.dim}, e.at(j));
      pairs.push_back(SimilarPair{s, i, j});
    }
  }
  std::sort(pairs.begin(), pairs.end(), pair_order);
  return pairs;
}

}  // namespace hat
