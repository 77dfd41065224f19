#include "hat/agent.hpp"

#include <algorithm>
#include <cctype>
#include <map>

#include "hat/errors.hpp"

namespace hat {

namespace {

constexpr const char* kFormatReminder =
    "Your previous response did not end with \"Answer: <answer>\" or "
    "\"Retrieve: <retrieve_query>\" in a new line. Respond again and end "
    "with exactly one of these action lines.";

std::string trim_ws(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

bool starts_with_nocase(const std::string& s, const char* prefix) {
  std::size_t i = 0;
  for (; prefix[i] != '\0'; ++i) {
    if (i >= s.size()) return false;
    if (std::tolower(static_cast<unsigned char>(s[i])) != prefix[i])
      return false;
  }
  return true;
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t eol = text.find('\n', start);
    if (eol == std::string::npos) eol = text.size();
    lines.push_back(text.substr(start, eol - start));
    start = eol + 1;
  }
  return lines;
}

// The one user section of the forced-answer template.
std::string load_forced_block(const std::string& path) {
  const std::vector<ChatMessage> msgs = load_chat_template(path, {});
  if (msgs.size() != 1 || msgs.front().role != "user")
    throw DataError("forced-answer template must be a single user section: " +
                    path);
  return msgs.front().content;
}

std::string docs_block(const std::vector<ScoredChunk>& hits,
                       const std::unordered_map<std::string, std::string>&
                           chunk_texts) {
  std::string out;
  for (const ScoredChunk& h : hits) {
    auto it = chunk_texts.find(h.chunk_id);
    if (it == chunk_texts.end())
      throw DataError("no text available for chunk " + h.chunk_id);
    if (!out.empty()) out += "\n\n";
    out += it->second;
  }
  return out;
}

std::string user_turn_message(const std::string& docs, const std::string& query,
                              const std::string& tail) {
  return "Retrieved documents:\n\n" + docs + "\n\nUser question: " + query +
         "\n\n" + tail + "\n\nThought:";
}

}  // namespace

AgentTurn parse_action(const std::string& response) {
  if (trim_ws(response).empty()) throw DataError("empty agent response");
  const std::vector<std::string> lines = split_lines(response);
  for (std::size_t i = lines.size(); i-- > 0;) {
    const std::string line = trim_ws(lines[i]);
    AgentAction action;
    std::size_t marker_len = 0;
    if (starts_with_nocase(line, "answer:")) {
      action = AgentAction::answer;
      marker_len = 7;
    } else if (starts_with_nocase(line, "retrieve:")) {
      action = AgentAction::retrieve;
      marker_len = 9;
    } else {
      continue;
    }
    AgentTurn turn;
    turn.action = action;
    turn.payload = trim_ws(line.substr(marker_len));
    if (turn.payload.empty())
      throw DataError("action line \"" + line + "\" has an empty payload");
    std::string reasoning;
    for (std::size_t j = 0; j < i; ++j) {
      if (j > 0) reasoning += '\n';
      reasoning += lines[j];
    }
    turn.reasoning = trim_ws(reasoning);
    return turn;
  }
  throw DataError(
      "no action line found; the response must end with \"Answer: <answer>\" "
      "or \"Retrieve: <retrieve_query>\"");
}

Session run_session(
    const std::string& query, const AbstractTree& t, const SparseIndex& sparse,
    const std::unordered_map<std::string, std::string>& chunk_texts,
    Embedder& embedder, ChatClient& chat, const AgentConfig& cfg,
    const FusionConfig& fusion, const RerankFn& rerank) {
  if (cfg.max_retrievals == 0)
    throw UsageError("max_retrievals must be at least 1");
  Session s;
  s.query = query;

  auto retrieve_with = [&](const std::string& text) {
    const std::vector<float> qvec = embedder.embed({text}).front();
    const RetrieveResult r =
        hybrid_retrieve(t, sparse, chunk_texts, qvec, text, fusion, rerank);
    s.retrieved_sets.push_back(r.chunks);
    s.ledger.add(r.chunks);
  };
  retrieve_with(query);

  s.messages = load_chat_template(
      cfg.qa_template_path,
      {{"max_retrieval_time", std::to_string(cfg.max_retrievals)},
       {"thought_max_length", std::to_string(cfg.thought_max_tokens)}});
  const std::string forced_block = load_forced_block(cfg.forced_template_path);

  // Chat call that converts a failure into outcome=error, keeping the
  // partial session. Returns false when the session should stop.
  auto call_chat = [&](std::string& reply) {
    try {
      reply = chat.complete(s.messages);
      return true;
    } catch (const std::exception& e) {
      s.outcome = SessionOutcome::error;
      s.error = std::string("chat failure: ") + e.what();
      return false;
    }
  };

  while (true) {
    const bool forced = s.retrieved_sets.size() >= cfg.max_retrievals;
    const std::size_t remaining = cfg.max_retrievals - s.retrieved_sets.size();
    const std::string tail =
        forced ? forced_block
               : "Retrieval time remaining: " + std::to_string(remaining);
    s.messages.push_back(
        {"user", user_turn_message(docs_block(s.retrieved_sets.back(),
                                              chunk_texts),
                                   query, tail)});

    std::string reply;
    if (!call_chat(reply)) return s;
    s.messages.push_back({"assistant", reply});

    AgentTurn turn;
    bool parsed = true;
    try {
      turn = parse_action(reply);
    } catch (const DataError&) {
      parsed = false;
    }
    if (!parsed) {
      s.messages.push_back({"user", kFormatReminder});
      if (!call_chat(reply)) return s;
      s.messages.push_back({"assistant", reply});
      try {
        turn = parse_action(reply);
      } catch (const DataError& e) {
        s.outcome = SessionOutcome::error;
        s.error = std::string("malformed action after retry: ") + e.what();
        return s;
      }
    }
    s.turns.push_back(turn);

    if (turn.action == AgentAction::answer) {
      s.answer = turn.payload;
      s.outcome = trim_ws(turn.payload) == cfg.not_mentioned_literal
                      ? SessionOutcome::not_mentioned
                      : SessionOutcome::answered;
      return s;
    }
    if (forced) {
      s.outcome = SessionOutcome::error;
      s.error = "retrieve action with no attempts remaining";
      return s;
    }
    retrieve_with(turn.payload);
  }
}

std::string summarization_session(
    const std::string& query, const AbstractTree& t,
    const std::unordered_map<std::string, std::string>& chunk_texts,
    Embedder& embedder, ChatClient& chat, const SummarizeConfig& cfg) {
  if (cfg.k == 0) throw UsageError("summarization k must be positive");
  const std::vector<float> qvec = embedder.embed({query}).front();
  const TreeSearchResult r = tree_search(t, qvec, cfg.k);

  // Leaf position stands in for corpus position: leaves are created in
  // corpus order, so reordering by it restores the original narrative.
  std::unordered_map<std::string, NodeId> position;
  for (const TreeNode& n : t.nodes)
    if (n.is_leaf) position.emplace(n.chunk_id, n.id);
  std::vector<std::pair<NodeId, std::string>> ordered;
  for (const ScoredChunk& h : r.hits) {
    auto it = chunk_texts.find(h.chunk_id);
    if (it == chunk_texts.end())
      throw DataError("no text available for chunk " + h.chunk_id);
    ordered.emplace_back(position.at(h.chunk_id), it->second);
  }
  std::sort(ordered.begin(), ordered.end());

  std::string docs;
  for (const auto& [id, text] : ordered) {
    if (!docs.empty()) docs += "\n\n";
    docs += "[" + std::to_string(id) + "] " + text;
  }

  const std::vector<ChatMessage> messages = load_chat_template(
      cfg.template_path,
      {{"response_max_length", std::to_string(cfg.response_max_tokens)},
       {"documents", docs},
       {"question", query}});
  return chat.complete(messages);
}

}  // namespace hat
