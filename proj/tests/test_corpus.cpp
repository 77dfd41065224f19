#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "hat/corpus.hpp"
#include "hat/errors.hpp"
#include "hat/tokenize.hpp"

using namespace hat;
namespace fs = std::filesystem;

namespace {

// A sentence of exactly `n` word tokens ending in a period.
std::string sentence_of(std::size_t n, const std::string& stem) {
  std::string s;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) s += ' ';
    s += stem + std::to_string(i);
  }
  s += '.';
  return s;
}

fs::path temp_file(const std::string& name) {
  return fs::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("greedy packing closes a chunk before exceeding the target") {
  // Five 30-token sentences with target 100: the first three pack to 90,
  // the fourth would overflow, so the tail forms a 60-token chunk.
  Document d;
  d.doc_id = "d";
  for (int i = 0; i < 5; ++i) {
    if (i) d.text += ' ';
    d.text += sentence_of(30, "s" + std::to_string(i) + "w");
  }
  ChunkingConfig cfg;
  cfg.target_tokens = 100;
  auto chunks = chunk_document(d, cfg);
  REQUIRE(chunks.size() == 2);
  CHECK(chunks[0].token_count == 90);
  CHECK(chunks[1].token_count == 60);
  CHECK(chunks[0].chunk_id == "d#0");
  CHECK(chunks[1].chunk_id == "d#1");
  CHECK(chunks[0].ordinal == 0);
  CHECK(chunks[1].ordinal == 1);
}

TEST_CASE("an oversized sentence is cut at token boundaries") {
  Document d;
  d.doc_id = "d";
  d.text = sentence_of(250, "w");
  ChunkingConfig cfg;
  cfg.target_tokens = 100;
  auto chunks = chunk_document(d, cfg);
  REQUIRE(chunks.size() == 2);
  CHECK(chunks[0].token_count == 200);
  CHECK(chunks[1].token_count == 50);
}

TEST_CASE("a long-but-capped sentence stays whole") {
  Document d;
  d.doc_id = "d";
  d.text = sentence_of(150, "w") + " " + sentence_of(30, "x");
  ChunkingConfig cfg;
  cfg.target_tokens = 100;
  auto chunks = chunk_document(d, cfg);
  REQUIRE(chunks.size() == 2);
  CHECK(chunks[0].token_count == 150);  // never cut: 150 <= 2*target
  CHECK(chunks[1].token_count == 30);
}

TEST_CASE("every token lands in exactly one chunk") {
  Document d;
  d.doc_id = "d";
  d.text = "First things first. Second item follows! Third? "
           "A final fragment without punctuation";
  ChunkingConfig cfg;
  cfg.target_tokens = 5;
  auto chunks = chunk_document(d, cfg);
  REQUIRE(!chunks.empty());
  std::string joined;
  std::size_t total_tokens = 0;
  for (const auto& c : chunks) {
    CHECK(c.token_count > 0);
    CHECK(c.token_count <= 2 * cfg.target_tokens);
    if (!joined.empty()) joined += ' ';
    joined += c.text;
    total_tokens += c.token_count;
  }
  CHECK(collapse_whitespace(joined) == collapse_whitespace(d.text));
  CHECK(total_tokens == count_tokens(d.text));
}

TEST_CASE("paragraph mode passes paragraphs through") {
  Document d;
  d.doc_id = "p";
  d.text = "para one has words\n\npara two also\n\n\npara three";
  ChunkingConfig cfg;
  cfg.mode = ChunkMode::paragraph;
  auto chunks = chunk_document(d, cfg);
  REQUIRE(chunks.size() == 3);
  CHECK(chunks[0].text == "para one has words");
  CHECK(chunks[2].text == "para three");
}

TEST_CASE("empty documents produce no chunks and a warning") {
  std::vector<Document> docs(2);
  docs[0].doc_id = "empty";
  docs[0].text = "   \n  ";
  docs[1].doc_id = "real";
  docs[1].text = "Some content here.";
  std::vector<std::string> warnings;
  auto chunks = chunk_corpus(docs, ChunkingConfig{},
                             [&](const std::string& w) { warnings.push_back(w); });
  REQUIRE(chunks.size() == 1);
  CHECK(chunks[0].doc_id == "real");
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("empty") != std::string::npos);
}

TEST_CASE("target_tokens of zero is a usage error") {
  Document d;
  d.doc_id = "d";
  d.text = "hello";
  ChunkingConfig cfg;
  cfg.target_tokens = 0;
  CHECK_THROWS_AS(chunk_document(d, cfg), UsageError);
}

TEST_CASE("jsonl corpus loads documents in order") {
  const fs::path p = temp_file("hat_corpus_ok.jsonl");
  {
    std::ofstream out(p);
    out << R"({"doc_id": "a", "title": "A", "text": "alpha text"})" << "\n";
    out << "\n";
    out << R"({"id": "b", "text": "beta text"})" << "\n";
  }
  auto docs = load_corpus_jsonl(p.string());
  REQUIRE(docs.size() == 2);
  CHECK(docs[0].doc_id == "a");
  CHECK(docs[0].title == "A");
  CHECK(docs[1].doc_id == "b");
  CHECK(docs[1].title.empty());
  fs::remove(p);
}

TEST_CASE("malformed corpus lines name the line number") {
  const fs::path p = temp_file("hat_corpus_bad.jsonl");
  {
    std::ofstream out(p);
    out << R"({"doc_id": "a", "text": "fine"})" << "\n";
    out << "{not json\n";
  }
  try {
    load_corpus_jsonl(p.string());
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find(":2") != std::string::npos);
  }
  fs::remove(p);
}

TEST_CASE("missing text field is a data error") {
  const fs::path p = temp_file("hat_corpus_notext.jsonl");
  {
    std::ofstream out(p);
    out << R"({"doc_id": "a"})" << "\n";
  }
  CHECK_THROWS_AS(load_corpus_jsonl(p.string()), DataError);
  fs::remove(p);
}

TEST_CASE("chunk store round trip") {
  Document d;
  d.doc_id = "rt";
  d.text = "One two three four five. Six seven eight nine ten. Extra tail.";
  ChunkingConfig cfg;
  cfg.target_tokens = 6;
  auto chunks = chunk_document(d, cfg);
  const fs::path p = temp_file("hat_chunks_rt.jsonl");
  save_chunks_jsonl(p.string(), chunks);
  auto loaded = load_chunks_jsonl(p.string());
  REQUIRE(loaded.size() == chunks.size());
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    CHECK(loaded[i].chunk_id == chunks[i].chunk_id);
    CHECK(loaded[i].doc_id == chunks[i].doc_id);
    CHECK(loaded[i].ordinal == chunks[i].ordinal);
    CHECK(loaded[i].text == chunks[i].text);
    CHECK(loaded[i].token_count == chunks[i].token_count);
  }
  fs::remove(p);
}
