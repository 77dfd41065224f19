#pragma once

#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

#include "hat/chat.hpp"
#include "hat/embed.hpp"
#include "hat/retrieve.hpp"
#include "hat/sparse.hpp"
#include "hat/tree.hpp"

namespace hat {

struct AgentConfig {
  // Total retrieval budget, the automatic first retrieval included. The
  // remaining-attempt counter shown to the model starts at max_retrievals - 1
  // and the answer is forced once it reaches zero.
  std::size_t max_retrievals = 4;
  std::size_t thought_max_tokens = 200;
  std::string not_mentioned_literal = "Not mentioned";
  std::string qa_template_path;      // multi-turn instruction template
  std::string forced_template_path;  // final-turn instruction block
};

enum class AgentAction { answer, retrieve };

struct AgentTurn {
  std::string reasoning;
  AgentAction action = AgentAction::answer;
  std::string payload;  // final answer, or the reorganized query
};

enum class SessionOutcome { answered, not_mentioned, error };

struct Session {
  std::string query;
  std::vector<AgentTurn> turns;
  std::vector<std::vector<ScoredChunk>> retrieved_sets;
  ScoreLedger ledger;
  SessionOutcome outcome = SessionOutcome::error;
  std::string answer;                 // set when outcome != error
  std::string error;                  // diagnostic when outcome == error
  std::vector<ChatMessage> messages;  // the full conversation as sent
};

// Splits an assistant response into reasoning and its action line: the last
// line starting with "Answer:" or "Retrieve:" (case-insensitive), scanning
// upward. DataError when no marker is found or the payload is empty.
AgentTurn parse_action(const std::string& response);

// The retrieval-and-answering loop: retrieve once with the question, then
// alternate chat turns with further retrievals the model requests, keeping
// every retrieved set and prior turn in the conversation. The final permitted
// turn swaps the remaining-attempt counter for the forced-answer instruction.
// Chat failures end the session with outcome=error and the partial session
// kept; a malformed action is retried once with a format reminder.
Session run_session(
    const std::string& query, const AbstractTree& t, const SparseIndex& sparse,
    const std::unordered_map<std::string, std::string>& chunk_texts,
    Embedder& embedder, ChatClient& chat, const AgentConfig& cfg,
    const FusionConfig& fusion = {}, const RerankFn& rerank = nullptr);

struct SummarizeConfig {
  std::size_t k = 10;
  std::size_t response_max_tokens = 200;
  std::string template_path;
};

// Single-shot summarization: one tree-only retrieval, hits reordered by leaf
// position with "[id]" prefixes, one generation. No sparse arm, no loop.
std::string summarization_session(
    const std::string& query, const AbstractTree& t,
    const std::unordered_map<std::string, std::string>& chunk_texts,
    Embedder& embedder, ChatClient& chat, const SummarizeConfig& cfg);

}  // namespace hat
