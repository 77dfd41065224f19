#include "hat/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "hat/errors.hpp"
#include "hat/tokenize.hpp"

namespace hat {

namespace {

const std::unordered_set<std::string>& stopwords() {
  static const std::unordered_set<std::string> kStop = {
      "a",  "an", "and", "are", "as",  "at", "be", "by",  "for", "from",
      "in", "is", "it",  "of",  "on",  "or", "the", "to", "was", "were",
      "with"};
  return kStop;
}

std::vector<std::string> index_terms(const std::string& text,
                                     const Bm25Config& cfg) {
  std::vector<std::string> ts = terms(text);
  if (!cfg.strip_stopwords) return ts;
  std::vector<std::string> out;
  for (auto& t : ts) {
    if (stopwords().count(t) == 0) out.push_back(std::move(t));
  }
  return out;
}

}  // namespace

SparseIndex build_sparse(const std::vector<Chunk>& chunks,
                         const Bm25Config& cfg) {
  SparseIndex idx;
  idx.cfg = cfg;
  std::uint64_t total_len = 0;
  for (std::uint32_t d = 0; d < chunks.size(); ++d) {
    idx.chunk_ids.push_back(chunks[d].chunk_id);
    std::unordered_map<std::string, std::uint32_t> tf;
    std::uint32_t len = 0;
    for (const std::string& t : index_terms(chunks[d].text, cfg)) {
      ++tf[t];
      ++len;
    }
    idx.doc_len.push_back(len);
    total_len += len;
    for (const auto& [term, f] : tf) {
      idx.postings[term].push_back({d, f});
    }
  }
  for (auto& [term, plist] : idx.postings) {
    std::sort(plist.begin(), plist.end());
  }
  idx.avgdl = idx.doc_len.empty()
                  ? 0.0
                  : static_cast<double>(total_len) /
                        static_cast<double>(idx.doc_len.size());
  return idx;
}

std::vector<SparseHit> sparse_search(const SparseIndex& idx,
                                     const std::string& query, std::size_t k) {
  if (idx.chunk_ids.empty() || k == 0) return {};
  // Dedupe query terms; repeats do not double-count.
  std::set<std::string> qterms;
  for (const std::string& t : index_terms(query, idx.cfg)) qterms.insert(t);

  const double n_docs = static_cast<double>(idx.chunk_ids.size());
  std::unordered_map<std::uint32_t, double> scores;
  for (const std::string& t : qterms) {
    auto it = idx.postings.find(t);
    if (it == idx.postings.end()) continue;
    const auto& plist = it->second;
    const double df = static_cast<double>(plist.size());
    const double idf = std::log(1.0 + (n_docs - df + 0.5) / (df + 0.5));
    for (const auto& [d, f] : plist) {
      const double tf = static_cast<double>(f);
      const double norm_len =
          idx.avgdl > 0.0
              ? static_cast<double>(idx.doc_len[d]) / idx.avgdl
              : 0.0;
      const double denom =
          tf + idx.cfg.k1 * (1.0 - idx.cfg.b + idx.cfg.b * norm_len);
      scores[d] += idf * tf * (idx.cfg.k1 + 1.0) / denom;
    }
  }
  std::vector<SparseHit> hits;
  hits.reserve(scores.size());
  for (const auto& [d, s] : scores) {
    hits.push_back(SparseHit{d, idx.chunk_ids[d], s});
  }
  std::sort(hits.begin(), hits.end(), [](const SparseHit& a, const SparseHit& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.index < b.index;
  });
  if (hits.size() > k) hits.resize(k);
  return hits;
}

void save_sparse(const std::string& path, const SparseIndex& idx) {
  nlohmann::ordered_json doc;
  doc["format"] = "hat-sparse";
  doc["version"] = 1;
  doc["k1"] = idx.cfg.k1;
  doc["b"] = idx.cfg.b;
  doc["strip_stopwords"] = idx.cfg.strip_stopwords;
  doc["chunk_ids"] = idx.chunk_ids;
  doc["doc_len"] = idx.doc_len;
  nlohmann::ordered_json postings = nlohmann::ordered_json::object();
  for (const auto& [term, plist] : idx.postings) {  // std::map: sorted terms
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const auto& [d, f] : plist) rows.push_back({d, f});
    postings[term] = std::move(rows);
  }
  doc["postings"] = std::move(postings);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write sparse index: " + path);
  out << doc.dump(1) << '\n';
  if (!out) throw DataError("failed writing sparse index: " + path);
}

SparseIndex load_sparse(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open sparse index: " + path);
  nlohmann::json doc = nlohmann::json::parse(in, nullptr, false);
  if (doc.is_discarded() || doc.value("format", "") != "hat-sparse") {
    throw DataError("not a sparse index file: " + path);
  }
  if (doc.value("version", -1) != 1) {
    throw DataError("sparse index version " +
                    std::to_string(doc.value("version", -1)) +
                    " unsupported (reader supports 1)");
  }
  SparseIndex idx;
  try {
    idx.cfg.k1 = doc.at("k1").get<double>();
    idx.cfg.b = doc.at("b").get<double>();
    idx.cfg.strip_stopwords = doc.at("strip_stopwords").get<bool>();
    idx.chunk_ids = doc.at("chunk_ids").get<std::vector<std::string>>();
    idx.doc_len = doc.at("doc_len").get<std::vector<std::uint32_t>>();
    for (const auto& [term, rows] : doc.at("postings").items()) {
      auto& plist = idx.postings[term];
      for (const auto& row : rows) {
        plist.push_back({row.at(0).get<std::uint32_t>(),
                         row.at(1).get<std::uint32_t>()});
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed sparse index " + path + ": " + e.what());
  }
  std::uint64_t total = 0;
  for (auto l : idx.doc_len) total += l;
  idx.avgdl = idx.doc_len.empty()
                  ? 0.0
                  : static_cast<double>(total) /
                        static_cast<double>(idx.doc_len.size());
  return idx;
}

}  // namespace hat
