#include "hat/embed.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <unordered_map>

#include "hat/errors.hpp"
#include "hat/rng.hpp"
#include "hat/tokenize.hpp"

namespace hat {

void Embeddings::append(std::span<const float> v) {
  if (dim == 0) dim = static_cast<std::uint32_t>(v.size());
  if (v.size() != dim) {
    throw DataError("embedding dimension mismatch: expected " +
                    std::to_string(dim) + ", got " + std::to_string(v.size()));
  }
  data.insert(data.end(), v.begin(), v.end());
}

void l2_normalize(std::vector<float>& v) {
  double sq = 0.0;
  for (float x : v) sq += static_cast<double>(x) * x;
  if (sq == 0.0) throw DataError("unembeddable text: all-zero vector");
  const double inv = 1.0 / std::sqrt(sq);
  for (float& x : v) x = static_cast<float>(x * inv);
}

float dot(std::span<const float> a, std::span<const float> b) {
  float s = 0.0f;
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

HashingEmbedder::HashingEmbedder(std::uint32_t dim, std::uint64_t seed)
    : dim_(dim) {
  if (dim == 0) throw UsageError("embedding dim must be > 0");
  // Mix the seed into the FNV basis so different seeds give unrelated
  // hash families while staying fully deterministic.
  basis_ = 14695981039346656037ull ^ (seed * 0x9e3779b97f4a7c15ull);
}

std::vector<float> HashingEmbedder::embed_one(const std::string& text) {
  std::vector<float> v(dim_, 0.0f);
  bool any = false;
  for (const std::string& term : terms(text)) {
    const std::uint64_t h = fnv1a64(term, basis_);
    const std::uint32_t bucket = static_cast<std::uint32_t>(h % dim_);
    const float sign = (h >> 63) ? -1.0f : 1.0f;
    v[bucket] += sign;
    any = true;
  }
  if (!any) {
    throw DataError("unembeddable text: no tokens in \"" +
                    text.substr(0, 40) + "\"");
  }
  try {
    l2_normalize(v);
  } catch (const DataError&) {
    // Distinct tokens can cancel inside one bucket; that still means there is
    // no direction to point at.
    throw DataError("unembeddable text: tokens cancel in \"" +
                    text.substr(0, 40) + "\"");
  }
  return v;
}

std::vector<std::vector<float>> HashingEmbedder::embed(
    const std::vector<std::string>& texts) {
  std::vector<std::vector<float>> out;
  out.reserve(texts.size());
  for (const std::string& t : texts) out.push_back(embed_one(t));
  return out;
}

struct StoredEmbedder::Impl {
  Embeddings table;
  std::unordered_map<std::uint64_t, std::size_t> by_hash;
};

StoredEmbedder::StoredEmbedder(const std::string& sidecar_path,
                               const std::string& keys_path)
    : impl_(std::make_shared<Impl>()) {
  impl_->table = load_sidecar(sidecar_path);
  std::ifstream in(keys_path);
  if (!in) throw DataError("cannot open key file: " + keys_path);
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    impl_->by_hash.emplace(std::stoull(line, nullptr, 16), row);
    ++row;
  }
  if (row != impl_->table.count()) {
    throw DataError("key file rows (" + std::to_string(row) +
                    ") do not match sidecar rows (" +
                    std::to_string(impl_->table.count()) + ")");
  }
}

std::uint32_t StoredEmbedder::dim() const { return impl_->table.dim; }

std::vector<std::vector<float>> StoredEmbedder::embed(
    const std::vector<std::string>& texts) {
  std::vector<std::vector<float>> out;
  out.reserve(texts.size());
  for (const std::string& t : texts) {
    auto it = impl_->by_hash.find(fnv1a64(t));
    if (it == impl_->by_hash.end()) {
      throw DataError("no stored embedding for text: \"" + t.substr(0, 60) +
                      "\"");
    }
    auto row = impl_->table.at(it->second);
    out.emplace_back(row.begin(), row.end());
  }
  return out;
}

Embeddings embed_all(Embedder& e, const std::vector<std::string>& texts,
                     std::size_t batch_size) {
  if (batch_size == 0) batch_size = 1;
  Embeddings out;
  out.dim = e.dim();
  out.data.reserve(texts.size() * e.dim());
  for (std::size_t start = 0; start < texts.size(); start += batch_size) {
    const std::size_t stop = std::min(texts.size(), start + batch_size);
    std::vector<std::string> batch(texts.begin() + start, texts.begin() + stop);
    for (const auto& v : e.embed(batch)) out.append(v);
  }
  return out;
}

namespace {

void put_u32_le(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4] = {
      static_cast<unsigned char>(v & 0xff),
      static_cast<unsigned char>((v >> 8) & 0xff),
      static_cast<unsigned char>((v >> 16) & 0xff),
      static_cast<unsigned char>((v >> 24) & 0xff),
  };
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32_le(std::ifstream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw DataError("truncated sidecar: " + path);
  }
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void save_sidecar(const std::string& path, const Embeddings& e) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write sidecar: " + path);
  out.write("PSIE", 4);
  put_u32_le(out, static_cast<std::uint32_t>(e.count()));
  put_u32_le(out, e.dim);
  for (float f : e.data) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32_le(out, bits);
  }
  if (!out) throw DataError("failed writing sidecar: " + path);
}

Embeddings load_sidecar(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open sidecar: " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "PSIE", 4) != 0) {
    throw DataError("bad sidecar magic in " + path);
  }
  const std::uint32_t count = get_u32_le(in, path);
  const std::uint32_t dim = get_u32_le(in, path);
  Embeddings e;
  e.dim = dim;
  e.data.resize(static_cast<std::size_t>(count) * dim);
  for (float& f : e.data) {
    const std::uint32_t bits = get_u32_le(in, path);
    std::memcpy(&f, &bits, 4);
  }
  char extra;
  if (in.read(&extra, 1)) {
    throw DataError("trailing bytes in sidecar: " + path);
  }
  return e;
}

void save_sidecar_keys(const std::string& path,
                       const std::vector<std::string>& texts) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write key file: " + path);
  char buf[17];
  for (const std::string& t : texts) {
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(t)));
    out << buf << '\n';
  }
}

}  // namespace hat
