#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace hat {

// Row-major matrix of unit-norm embeddings. Kept flat for cache-friendly
// similarity scans over large pair sets.
struct Embeddings {
  std::uint32_t dim = 0;
  std::vector<float> data;

  std::size_t count() const { return dim == 0 ? 0 : data.size() / dim; }
  const float* row(std::size_t i) const { return data.data() + i * dim; }
  std::span<const float> at(std::size_t i) const { return {row(i), dim}; }
  void append(std::span<const float> v);
};

// L2-normalizes in place; throws DataError("unembeddable text ...") context
// free if the vector is all-zero (callers add context).
void l2_normalize(std::vector<float>& v);

float dot(std::span<const float> a, std::span<const float> b);

// Cosine similarity; inputs are unit vectors everywhere in this codebase, so
// this is a plain dot product.
inline float cosine(std::span<const float> a, std::span<const float> b) {
  return dot(a, b);
}

// Provider interface: turns texts into unit-norm embeddings of fixed width.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::uint32_t dim() const = 0;
  virtual std::vector<std::vector<float>> embed(
      const std::vector<std::string>& texts) = 0;
};

// Deterministic offline provider: hashed bag of words. Each lowercased token
// hashes to one of `dim` buckets with a ±1 sign drawn from the hash; the
// bucket sums are then L2-normalized. Identical (text, dim, seed) always
// yields identical vectors.
class HashingEmbedder : public Embedder {
 public:
  explicit HashingEmbedder(std::uint32_t dim = 256, std::uint64_t seed = 0);
  std::uint32_t dim() const override { return dim_; }
  std::vector<std::vector<float>> embed(
      const std::vector<std::string>& texts) override;
  std::vector<float> embed_one(const std::string& text);

 private:
  std::uint32_t dim_;
  std::uint64_t basis_;
};

// Replay provider backed by a sidecar written earlier: texts are looked up by
// content hash; unknown text is a data error. Lets every pipeline stage run
// offline against precomputed vectors.
class StoredEmbedder : public Embedder {
 public:
  StoredEmbedder(const std::string& sidecar_path, const std::string& keys_path);
  std::uint32_t dim() const override;
  std::vector<std::vector<float>> embed(
      const std::vector<std::string>& texts) override;

 private:
  struct Impl;
  std::shared_ptr<Impl> impl_;
};

// Embeds all texts through `e` in order, batching `batch_size` at a time.
Embeddings embed_all(Embedder& e, const std::vector<std::string>& texts,
                     std::size_t batch_size = 64);

// Binary sidecar: magic "PSIE", u32 LE count, u32 LE dim, then count*dim
// little-endian f32 in row-major order.
void save_sidecar(const std::string& path, const Embeddings& e);
Embeddings load_sidecar(const std::string& path);

// Writes the key file for StoredEmbedder: one lowercase hex fnv1a64 of each
// text per line, aligned with sidecar rows.
void save_sidecar_keys(const std::string& path,
                       const std::vector<std::string>& texts);

}  // namespace hat
