#include "hat/eval.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>
#include <sstream>

#include "hat/errors.hpp"

namespace hat {
namespace {

std::string fold_text(const std::string& text, bool drop_articles) {
  std::string folded;
  folded.reserve(text.size());
  for (unsigned char c : text) {
    if (std::ispunct(c)) continue;
    folded.push_back(static_cast<char>(std::tolower(c)));
  }
  std::istringstream in(folded);
  std::string word;
  std::string out;
  while (in >> word) {
    if (drop_articles && (word == "a" || word == "an" || word == "the"))
      continue;
    if (!out.empty()) out.push_back(' ');
    out += word;
  }
  return out;
}

std::vector<std::string> split_words(const std::string& normalized) {
  std::istringstream in(normalized);
  std::vector<std::string> words;
  std::string word;
  while (in >> word) words.push_back(word);
  return words;
}

double pair_f1(const std::vector<std::string>& pred,
               const std::vector<std::string>& gold) {
  if (pred.empty() || gold.empty()) return pred.empty() == gold.empty();
  std::map<std::string, int> counts;
  for (const std::string& w : gold) ++counts[w];
  int overlap = 0;
  for (const std::string& w : pred) {
    auto it = counts.find(w);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  if (overlap == 0) return 0.0;
  const double p = static_cast<double>(overlap) / static_cast<double>(pred.size());
  const double r = static_cast<double>(overlap) / static_cast<double>(gold.size());
  return 2.0 * p * r / (p + r);
}

}  // namespace

std::string normalize_answer(const std::string& text) {
  return fold_text(text, true);
}

std::string normalize_summary(const std::string& text) {
  return fold_text(text, false);
}

int exact_match(const std::string& pred, const std::vector<std::string>& gold) {
  const std::string p = normalize_answer(pred);
  for (const std::string& g : gold)
    if (p == normalize_answer(g)) return 1;
  return 0;
}

double token_f1(const std::string& pred,
                const std::vector<std::string>& gold) {
  const std::vector<std::string> p = split_words(normalize_answer(pred));
  double best = 0.0;
  for (const std::string& g : gold)
    best = std::max(best, pair_f1(p, split_words(normalize_answer(g))));
  return best;
}

QaJudgment judge_qa(const std::string& pred,
                    const std::vector<std::string>& gold) {
  QaJudgment j;
  j.em = exact_match(pred, gold);
  j.f1 = token_f1(pred, gold);
  return j;
}

double recall_at_k(const std::vector<std::string>& retrieved,
                   const std::vector<std::string>& gold_ids, std::size_t k) {
  const std::set<std::string> gold(gold_ids.begin(), gold_ids.end());
  if (gold.empty()) throw UsageError("recall_at_k requires gold ids");
  std::set<std::string> hit;
  const std::size_t top = std::min(k, retrieved.size());
  for (std::size_t i = 0; i < top; ++i)
    if (gold.count(retrieved[i])) hit.insert(retrieved[i]);
  return static_cast<double>(hit.size()) / static_cast<double>(gold.size());
}

double rouge_l(const std::string& pred, const std::string& gold) {
  const std::vector<std::string> p = split_words(normalize_summary(pred));
  const std::vector<std::string> g = split_words(normalize_summary(gold));
  if (p.empty() || g.empty()) return 0.0;
  // One-row LCS table over the shorter side.
  const std::vector<std::string>& rows = p.size() >= g.size() ? p : g;
  const std::vector<std::string>& cols = p.size() >= g.size() ? g : p;
  std::vector<std::size_t> dp(cols.size() + 1, 0);
  for (const std::string& rw : rows) {
    std::size_t diag = 0;
    for (std::size_t c = 0; c < cols.size(); ++c) {
      const std::size_t saved = dp[c + 1];
      dp[c + 1] = rw == cols[c] ? diag + 1 : std::max(dp[c + 1], dp[c]);
      diag = saved;
    }
  }
  const std::size_t lcs = dp[cols.size()];
  if (lcs == 0) return 0.0;
  const double prec = static_cast<double>(lcs) / static_cast<double>(p.size());
  const double rec = static_cast<double>(lcs) / static_cast<double>(g.size());
  return 2.0 * prec * rec / (prec + rec);
}

}  // namespace hat
