#include "hat/corpus.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "hat/errors.hpp"
#include "hat/tokenize.hpp"

namespace hat {

namespace {

void default_warn(const std::string& msg) {
  std::fprintf(stderr, "warning: %s\n", msg.c_str());
}

std::string chunk_id_for(const std::string& doc_id, std::uint32_t ordinal) {
  return doc_id + "#" + std::to_string(ordinal);
}

// Splits `text` at word-token boundaries into pieces of at most `max_tokens`
// tokens each, preserving the original bytes (punctuation included).
std::vector<std::string> split_at_token_boundaries(const std::string& text,
                                                   std::uint32_t max_tokens) {
  const std::vector<Token> toks = word_tokens(text);
  std::vector<std::string> pieces;
  std::size_t tok_idx = 0;
  std::size_t byte_begin = 0;
  while (tok_idx < toks.size()) {
    const std::size_t last = std::min(toks.size(), tok_idx + max_tokens);
    const std::size_t byte_end =
        (last == toks.size()) ? text.size() : toks[last].begin;
    std::string piece =
        collapse_whitespace(text.substr(byte_begin, byte_end - byte_begin));
    if (!piece.empty()) pieces.push_back(std::move(piece));
    tok_idx = last;
    byte_begin = byte_end;
  }
  return pieces;
}

}  // namespace

std::vector<Document> load_corpus_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus file: " + path);
  std::vector<Document> docs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw DataError(path + ":" + std::to_string(lineno) +
                      ": malformed JSON object");
    }
    Document d;
    if (j.contains("doc_id")) {
      d.doc_id = j.at("doc_id").get<std::string>();
    } else if (j.contains("id")) {
      d.doc_id = j.at("id").get<std::string>();
    } else {
      throw DataError(path + ":" + std::to_string(lineno) +
                      ": missing \"doc_id\"");
    }
    if (!j.contains("text") || !j.at("text").is_string()) {
      throw DataError(path + ":" + std::to_string(lineno) +
                      ": missing \"text\"");
    }
    d.text = j.at("text").get<std::string>();
    if (j.contains("title")) d.title = j.at("title").get<std::string>();
    docs.push_back(std::move(d));
  }
  return docs;
}

std::vector<Chunk> chunk_document(const Document& doc,
                                  const ChunkingConfig& cfg) {
  if (cfg.target_tokens == 0) throw UsageError("target_tokens must be > 0");
  std::vector<std::string> units = (cfg.mode == ChunkMode::paragraph)
                                       ? split_paragraphs(doc.text)
                                       : split_sentences(doc.text);
  std::vector<Chunk> chunks;
  std::uint32_t ordinal = 0;
  auto emit = [&](std::string text) {
    Chunk c;
    c.doc_id = doc.doc_id;
    c.ordinal = ordinal;
    c.chunk_id = chunk_id_for(doc.doc_id, ordinal);
    c.token_count = static_cast<std::uint32_t>(count_tokens(text));
    c.text = std::move(text);
    ++ordinal;
    chunks.push_back(std::move(c));
  };

  if (cfg.mode == ChunkMode::paragraph) {
    for (const std::string& p : units) {
      std::string t = collapse_whitespace(p);
      if (!t.empty()) emit(std::move(t));
    }
    return chunks;
  }

  const std::uint32_t target = cfg.target_tokens;
  const std::uint32_t hard_cap = 2 * target;
  std::string current;
  std::uint32_t current_tokens = 0;
  auto flush = [&] {
    if (!current.empty()) {
      emit(std::move(current));
      current.clear();
      current_tokens = 0;
    }
  };
  for (const std::string& s : units) {
    const auto t = static_cast<std::uint32_t>(count_tokens(s));
    if (t == 0) continue;
    if (t > hard_cap) {
      // A single sentence longer than the hard cap is cut at token
      // boundaries; each piece becomes its own chunk.
      flush();
      for (std::string& piece : split_at_token_boundaries(s, hard_cap)) {
        emit(std::move(piece));
      }
      continue;
    }
    if (current_tokens + t > target && !current.empty()) flush();
    if (!current.empty()) current += ' ';
    current += collapse_whitespace(s);
    current_tokens += t;
  }
  flush();
  return chunks;
}

std::vector<Chunk> chunk_corpus(const std::vector<Document>& docs,
                                const ChunkingConfig& cfg,
                                const WarnFn& warn) {
  const WarnFn& w = warn ? warn : WarnFn(default_warn);
  std::vector<Chunk> all;
  for (const Document& d : docs) {
    std::vector<Chunk> cs = chunk_document(d, cfg);
    if (cs.empty()) {
      w("document \"" + d.doc_id + "\" is empty; no chunks produced");
      continue;
    }
    for (Chunk& c : cs) all.push_back(std::move(c));
  }
  return all;
}

void save_chunks_jsonl(const std::string& path,
                       const std::vector<Chunk>& chunks) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write chunk store: " + path);
  for (const Chunk& c : chunks) {
    nlohmann::ordered_json j;
    j["chunk_id"] = c.chunk_id;
    j["doc_id"] = c.doc_id;
    j["ordinal"] = c.ordinal;
    j["token_count"] = c.token_count;
    j["text"] = c.text;
    out << j.dump() << '\n';
  }
  if (!out) throw DataError("failed writing chunk store: " + path);
}

std::vector<Chunk> load_chunks_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open chunk store: " + path);
  std::vector<Chunk> chunks;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw DataError(path + ":" + std::to_string(lineno) +
                      ": malformed JSON object");
    }
    try {
      Chunk c;
      c.chunk_id = j.at("chunk_id").get<std::string>();
      c.doc_id = j.at("doc_id").get<std::string>();
      c.ordinal = j.at("ordinal").get<std::uint32_t>();
      c.token_count = j.at("token_count").get<std::uint32_t>();
      c.text = j.at("text").get<std::string>();
      chunks.push_back(std::move(c));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return chunks;
}

}  // namespace hat
