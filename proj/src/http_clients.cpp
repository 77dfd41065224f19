#include "hat/http_clients.hpp"

#include <httplib.h>
#include <json.hpp>

#include <utility>

#include "hat/errors.hpp"

namespace hat {
namespace {

using nlohmann::json;

// Posts the payload until a 2xx response parses as JSON, retrying transport
// failures, bad statuses, and unparseable bodies alike.
json post_json(const EndpointConfig& cfg, const std::string& path,
               const json& payload) {
  if (cfg.base_url.empty()) throw UsageError("endpoint base_url is not set");
  httplib::Client client(cfg.base_url);
  client.set_connection_timeout(cfg.timeout_seconds, 0);
  client.set_read_timeout(cfg.timeout_seconds, 0);
  httplib::Headers headers;
  if (!cfg.api_key.empty())
    headers.emplace("Authorization", "Bearer " + cfg.api_key);
  const std::string body = payload.dump();
  const int attempts = cfg.max_attempts > 0 ? cfg.max_attempts : 1;
  std::string last_error;
  for (int attempt = 1; attempt <= attempts; ++attempt) {
    httplib::Result res =
        client.Post(path, headers, body, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status < 200 || res->status >= 300) {
      last_error = "status " + std::to_string(res->status);
      continue;
    }
    json parsed = json::parse(res->body, nullptr, false);
    if (parsed.is_discarded()) {
      last_error = "unparseable response body";
      continue;
    }
    return parsed;
  }
  throw EndpointError(cfg.base_url + path + " failed (" + last_error + ")",
                      attempts);
}

}  // namespace

HttpEmbedder::HttpEmbedder(EndpointConfig cfg, std::uint32_t dim)
    : cfg_(std::move(cfg)), dim_(dim) {
  if (dim_ == 0) throw UsageError("embedding dimension must be positive");
}

std::vector<std::vector<float>> HttpEmbedder::embed(
    const std::vector<std::string>& texts) {
  if (texts.empty()) return {};
  const json reply = post_json(cfg_, "/embed", json{{"texts", texts}});
  if (!reply.contains("embeddings") || !reply["embeddings"].is_array())
    throw DataError("embedding response lacks an embeddings array");
  const json& rows = reply["embeddings"];
  if (rows.size() != texts.size())
    throw DataError("embedding response has " + std::to_string(rows.size()) +
                    " rows for " + std::to_string(texts.size()) + " texts");
  std::vector<std::vector<float>> out;
  out.reserve(rows.size());
  for (const json& row : rows) {
    if (!row.is_array() || row.size() != dim_)
      throw DataError("embedding row width differs from the configured " +
                      std::to_string(dim_));
    std::vector<float> vec;
    vec.reserve(dim_);
    for (const json& v : row) vec.push_back(v.get<float>());
    out.push_back(std::move(vec));
  }
  return out;
}

HttpChatClient::HttpChatClient(EndpointConfig cfg) : cfg_(std::move(cfg)) {}

std::string HttpChatClient::complete(
    const std::vector<ChatMessage>& messages) {
  json payload = {{"model", cfg_.model},
                  {"temperature", cfg_.temperature},
                  {"messages", json::array()}};
  for (const ChatMessage& m : messages)
    payload["messages"].push_back({{"role", m.role}, {"content", m.content}});
  const json reply = post_json(cfg_, "/v1/chat/completions", payload);
  if (!reply.contains("choices") || !reply["choices"].is_array() ||
      reply["choices"].empty())
    throw DataError("chat response lacks choices");
  const json& msg = reply["choices"][0];
  if (!msg.contains("message") || !msg["message"].contains("content") ||
      !msg["message"]["content"].is_string())
    throw DataError("chat response lacks message content");
  return msg["message"]["content"].get<std::string>();
}

HttpReranker::HttpReranker(EndpointConfig cfg) : cfg_(std::move(cfg)) {}

std::vector<double> HttpReranker::operator()(
    const std::string& query, const std::vector<std::string>& passages) const {
  const json reply = post_json(
      cfg_, "/rerank", json{{"query", query}, {"passages", passages}});
  if (!reply.contains("scores") || !reply["scores"].is_array())
    throw DataError("rerank response lacks a scores array");
  std::vector<double> scores;
  for (const json& s : reply["scores"]) scores.push_back(s.get<double>());
  if (scores.size() != passages.size())
    throw DataError("rerank response scored " + std::to_string(scores.size()) +
                    " of " + std::to_string(passages.size()) + " passages");
  return scores;
}

}  // namespace hat
