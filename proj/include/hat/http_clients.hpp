#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hat/chat.hpp"
#include "hat/embed.hpp"

namespace hat {

// Connection settings shared by the remote providers. api_key, when set, is
// sent as a bearer Authorization header. max_attempts counts the first try.
struct EndpointConfig {
  std::string base_url;  // scheme://host:port
  std::string api_key;
  std::string model;
  double temperature = 0.0;
  int max_attempts = 3;
  int timeout_seconds = 30;
};

// Remote embedder: POST {"texts": [...]} to /embed, expects
// {"embeddings": [[...], ...]} with one row per input. Transport errors and
// non-2xx statuses retry up to max_attempts, then raise EndpointError; a
// well-formed response with the wrong row count or width raises DataError
// immediately.
class HttpEmbedder : public Embedder {
 public:
  HttpEmbedder(EndpointConfig cfg, std::uint32_t dim);
  std::uint32_t dim() const override { return dim_; }
  std::vector<std::vector<float>> embed(
      const std::vector<std::string>& texts) override;

 private:
  EndpointConfig cfg_;
  std::uint32_t dim_;
};

// Remote chat completion: POST {"model", "temperature", "messages"} to
// /v1/chat/completions, expects {"choices": [{"message": {"content"}}]}.
class HttpChatClient : public ChatClient {
 public:
  explicit HttpChatClient(EndpointConfig cfg);
  std::string complete(const std::vector<ChatMessage>& messages) override;

 private:
  EndpointConfig cfg_;
};

// Remote reranker: POST {"query", "passages"} to /rerank, expects
// {"scores": [...]} with one real per passage. Callable with the fusion
// reranker signature; a wrong-length response raises DataError, which the
// fusion layer converts into an rrf fallback.
class HttpReranker {
 public:
  explicit HttpReranker(EndpointConfig cfg);
  std::vector<double> operator()(const std::string& query,
                                 const std::vector<std::string>& passages) const;

 private:
  EndpointConfig cfg_;
};

}  // namespace hat
