#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace hat {

struct Document {
  std::string doc_id;
  std::string title;  // optional, may be empty
  std::string text;
};

struct Chunk {
  std::string chunk_id;  // "<doc_id>#<ordinal>"
  std::string doc_id;
  std::uint32_t ordinal = 0;  // position within the document
  std::string text;
  std::uint32_t token_count = 0;
};

enum class ChunkMode {
  sentence_pack,  // greedy sentence packing toward target_tokens
  paragraph,      // one chunk per paragraph (pre-split datasets)
};

struct ChunkingConfig {
  std::uint32_t target_tokens = 100;
  ChunkMode mode = ChunkMode::sentence_pack;
};

using WarnFn = std::function<void(const std::string&)>;

// Reads a JSONL corpus: one object per line with "doc_id" (or "id"),
// optional "title", and "text". Throws DataError naming the offending line.
std::vector<Document> load_corpus_jsonl(const std::string& path);

// Greedy sentence packing: sentences are appended while the running token
// count stays within target_tokens; a chunk never ends mid-sentence unless a
// single sentence exceeds 2*target_tokens, in which case that sentence is cut
// at token boundaries into pieces of at most 2*target_tokens. Every chunk is
// non-empty and every token of the document lands in exactly one chunk.
std::vector<Chunk> chunk_document(const Document& doc,
                                  const ChunkingConfig& cfg);

// Chunks every document in order; chunk ids are unique and deterministic.
// Empty documents produce no chunks and a warning through `warn` (stderr by
// default).
std::vector<Chunk> chunk_corpus(const std::vector<Document>& docs,
                                const ChunkingConfig& cfg,
                                const WarnFn& warn = {});

void save_chunks_jsonl(const std::string& path,
                       const std::vector<Chunk>& chunks);
std::vector<Chunk> load_chunks_jsonl(const std::string& path);

}  // namespace hat
