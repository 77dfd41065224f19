#include "hat/abstraction.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <set>

#include "hat/errors.hpp"
#include "hat/tokenize.hpp"

namespace hat {

namespace {

std::string trim_ws(const std::string& s) {
  const std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_phrases(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',' || c == '\n') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  for (auto& p : out) p = trim_ws(p);
  out.erase(std::remove_if(out.begin(), out.end(),
                           [](const std::string& p) { return p.empty(); }),
            out.end());
  return out;
}

std::string join_documents(const std::vector<std::string>& child_texts) {
  std::string out;
  for (const std::string& t : child_texts) {
    if (!out.empty()) out += "\n\n";
    out += t;
  }
  return out;
}

}  // namespace

std::vector<std::string> phrase_candidates(const std::string& text) {
  const std::vector<std::string> ts = terms(text);
  std::vector<std::string> out = ts;
  for (std::size_t i = 0; i + 1 < ts.size(); ++i) {
    out.push_back(ts[i] + " " + ts[i + 1]);
  }
  return out;
}

std::string strip_summary_prefix(const std::string& response) {
  std::string s = trim_ws(response);
  const std::string label = "summary:";
  if (s.size() >= label.size()) {
    bool match = true;
    for (std::size_t i = 0; i < label.size(); ++i) {
      if (std::tolower(static_cast<unsigned char>(s[i])) != label[i]) {
        match = false;
        break;
      }
    }
    if (match) s = trim_ws(s.substr(label.size()));
  }
  return s;
}

std::string truncate_to_sentences(const std::string& text,
                                  std::size_t max_tokens) {
  if (count_tokens(text) <= max_tokens) return trim_ws(text);
  std::string out;
  std::size_t used = 0;
  for (const std::string& sentence : split_sentences(text)) {
    const std::size_t n = count_tokens(sentence);
    if (used + n > max_tokens) break;
    if (!out.empty()) out += ' ';
    out += sentence;
    used += n;
  }
  if (!out.empty()) return out;
  // The very first sentence is overlong: cut at a token boundary.
  const auto toks = word_tokens(text);
  const std::size_t end = toks[max_tokens - 1].end;
  return trim_ws(text.substr(0, end));
}

std::string normalize_keyword_line(const std::string& response,
                                   std::size_t max_keywords) {
  std::vector<std::string> kept;
  std::set<std::string> seen;
  for (const std::string& p : split_phrases(response)) {
    if (kept.size() == max_keywords) break;
    if (!seen.insert(to_lower(p)).second) continue;
    kept.push_back(p);
  }
  std::string out;
  for (const std::string& p : kept) {
    if (!out.empty()) out += ',';
    out += p;
  }
  return out;
}

std::string merge_keyword_lines(const std::string& old_line,
                                const std::string& new_line,
                                std::size_t max_keywords) {
  return normalize_keyword_line(old_line + "," + new_line, max_keywords);
}

OfflineAbstractor::OfflineAbstractor(const AbstractionConfig& cfg,
                                     const std::vector<Chunk>& corpus)
    : cfg_(cfg), n_docs_(corpus.size()) {
  for (const Chunk& c : corpus) {
    std::set<std::string> uniq;
    for (const std::string& p : phrase_candidates(c.text)) uniq.insert(p);
    for (const std::string& p : uniq) ++df_[p];
  }
}

std::string OfflineAbstractor::abstract(
    const std::vector<std::string>& child_texts) {
  if (child_texts.empty()) throw DataError("cannot abstract zero children");
  if (cfg_.style == AbstractStyle::summative) {
    std::string joined;
    for (const std::string& t : child_texts) {
      const auto sentences = split_sentences(t);
      if (sentences.empty()) continue;
      if (!joined.empty()) joined += ' ';
      joined += sentences.front();
    }
    if (joined.empty()) throw DataError("children contain no sentences");
    return truncate_to_sentences(joined, cfg_.summary_max_tokens);
  }

  // Keyword mode: tf over the child texts, idf against the whole corpus.
  std::map<std::string, std::size_t> tf;
  for (const std::string& t : child_texts) {
    for (const std::string& p : phrase_candidates(t)) ++tf[p];
  }
  if (tf.empty()) throw DataError("children contain no phrases");
  std::vector<std::pair<double, std::string>> scored;
  scored.reserve(tf.size());
  for (const auto& [phrase, f] : tf) {
    const double df = static_cast<double>(
        df_.count(phrase) ? df_.at(phrase) : std::size_t{0});
    const double idf =
        std::log((static_cast<double>(n_docs_) + 1.0) / (df + 1.0)) + 1.0;
    scored.push_back({static_cast<double>(f) * idf, phrase});
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::string line;
  const std::size_t n = std::min(cfg_.max_keywords, scored.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (!line.empty()) line += ',';
    line += scored[i].second;
  }
  return line;
}

ChatAbstractor::ChatAbstractor(const AbstractionConfig& cfg,
                               ChatClient& client,
                               const std::string& template_path)
    : cfg_(cfg), client_(client), template_(load_text_file(template_path)) {}

std::string ChatAbstractor::abstract(
    const std::vector<std::string>& child_texts) {
  return abstract_guarded(child_texts, /*allow_split=*/true);
}

std::string ChatAbstractor::abstract_guarded(
    const std::vector<std::string>& child_texts, bool allow_split) {
  if (child_texts.empty()) throw DataError("cannot abstract zero children");
  const std::string documents = join_documents(child_texts);
  // The budget covers the variable payload only; halving the children is
  // what shrinks it. The merge call never re-splits, so recursion is finite.
  if (allow_split && cfg_.max_prompt_tokens > 0 && child_texts.size() > 1 &&
      count_tokens(documents) > cfg_.max_prompt_tokens) {
    const std::size_t cut = (child_texts.size() + 1) / 2;
    const std::vector<std::string> first(child_texts.begin(),
                                         child_texts.begin() + cut);
    const std::vector<std::string> second(child_texts.begin() + cut,
                                          child_texts.end());
    const std::string a = abstract_guarded(first, true);
    const std::string b = abstract_guarded(second, true);
    return abstract_guarded({a, b}, false);
  }
  const std::map<std::string, std::string> vars = {
      {"summary_max_length", std::to_string(cfg_.summary_max_tokens)},
      {"max_num_keywords", std::to_string(cfg_.max_keywords)},
      {"documents", documents},
  };
  const std::string reply =
      client_.complete(parse_chat_template(render_template(template_, vars)));
  std::string out;
  if (cfg_.style == AbstractStyle::summative) {
    out = truncate_to_sentences(strip_summary_prefix(reply),
                                cfg_.summary_max_tokens);
  } else {
    out = normalize_keyword_line(reply, cfg_.max_keywords);
  }
  if (out.empty()) throw DataError("empty abstraction response");
  return out;
}

AbstractionStats abstract_tree(
    AbstractTree& t, Abstractor& abstractor, Embedder& embedder,
    const std::unordered_map<std::string, std::string>& chunk_texts,
    const AbstractionConfig& cfg) {
  AbstractionStats stats;
  const auto by_depth = layers(t);
  if (by_depth.size() < 2) return stats;  // a lone leaf has nothing abstract
  for (std::size_t level = by_depth.size() - 1; level-- > 0;) {
    std::vector<NodeId> todo;
    for (NodeId id : by_depth[level]) {
      const TreeNode& n = t.at(id);
      if (n.is_leaf) continue;
      if (!n.abstract_text.empty() && !n.stale && n.has_embedding) continue;
      todo.push_back(id);
    }
    for (NodeId id : todo) {
      TreeNode& n = t.at(id);
      std::vector<std::string> child_texts;
      for (NodeId c : n.children) {
        const TreeNode& child = t.at(c);
        if (child.is_leaf) {
          auto it = chunk_texts.find(child.chunk_id);
          if (it == chunk_texts.end()) {
            throw DataError("no text for chunk " + child.chunk_id +
                            " (leaf " + std::to_string(c) + ")");
          }
          child_texts.push_back(it->second);
        } else {
          if (child.abstract_text.empty()) {
            throw DataError("child node " + std::to_string(c) +
                            " has no abstract yet");
          }
          child_texts.push_back(child.abstract_text);
        }
      }
      // Abstract, encode, then commit, so an interrupted run leaves every
      // finished node complete and a rerun picks up where it stopped.
      std::string text;
      Embeddings vec;
      try {
        text = abstractor.abstract(child_texts);
        ++stats.calls;
        if (cfg.style == AbstractStyle::keyword && n.stale &&
            !n.abstract_text.empty()) {
          text = merge_keyword_lines(n.abstract_text, text, cfg.max_keywords);
        }
        vec = embed_all(embedder, {text});
      } catch (const EndpointError& e) {
        throw EndpointError("abstracting node " + std::to_string(id) + ": " +
                            e.what(), e.attempts);
      } catch (const DataError& e) {
        throw DataError("abstracting node " + std::to_string(id) + ": " +
                        e.what());
      }
      const auto row = vec.at(0);
      n.abstract_text = std::move(text);
      n.embedding.assign(row.begin(), row.end());
      n.has_embedding = true;
      n.stale = false;
      ++stats.abstracted;
    }
  }
  return stats;
}

}  // namespace hat
