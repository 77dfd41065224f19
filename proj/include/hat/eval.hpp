#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace hat {

// Answer normalization: lowercase, drop punctuation characters, drop the
// articles a/an/the, collapse whitespace. Applied to predictions and gold
// answers before any QA comparison.
std::string normalize_answer(const std::string& text);

// Summary normalization keeps articles: lowercase, drop punctuation,
// collapse whitespace. Sequence comparisons score articles like any token.
std::string normalize_summary(const std::string& text);

// 1 iff the normalized prediction equals any normalized gold answer.
int exact_match(const std::string& pred, const std::vector<std::string>& gold);

// Bag-of-tokens F1 = 2PR/(P+R) over normalized tokens, maximized across the
// gold answers. Empty-vs-empty scores 1, empty-vs-nonempty 0.
double token_f1(const std::string& pred, const std::vector<std::string>& gold);

struct QaJudgment {
  int em = 0;
  double f1 = 0.0;  // >= em by construction
};

QaJudgment judge_qa(const std::string& pred,
                    const std::vector<std::string>& gold);

// Fraction of distinct gold ids appearing in the first k retrieved ids.
// Monotone in k. Throws UsageError when gold is empty.
double recall_at_k(const std::vector<std::string>& retrieved,
                   const std::vector<std::string>& gold_ids, std::size_t k);

// Longest-common-subsequence F-measure with beta = 1 over summary-normalized
// tokens: P = LCS/|pred|, R = LCS/|gold|, F = 2PR/(P+R). Either side empty
// scores 0.
double rouge_l(const std::string& pred, const std::string& gold);

}  // namespace hat
