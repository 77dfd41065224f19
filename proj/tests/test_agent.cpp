#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "doctest.h"
#include "hat/agent.hpp"
#include "hat/errors.hpp"
#include "hat/pairs.hpp"

using namespace hat;

namespace {

const std::vector<std::string> kTexts = {
    "The Harbor Quartet was founded by Nils Verne in 1988.",
    "Nils Verne plays the cello in every concert.",
    "Marine charts of the harbor are updated yearly.",
    "The quartet toured coastal towns last spring.",
    "A lighthouse keeper logs the evening tide.",
    "Verne studied composition before turning to performance.",
};

struct AgentFixture {
  std::vector<Chunk> chunks;
  std::unordered_map<std::string, std::string> texts;
  HashingEmbedder embedder{64};
  AbstractTree tree;
  SparseIndex sparse;
  AgentConfig cfg;
};

AgentFixture make_fixture() {
  AgentFixture f;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < kTexts.size(); ++i) {
    const std::string id = "q#" + std::to_string(i);
    f.chunks.push_back({id, "q", static_cast<std::uint32_t>(i), kTexts[i], 0});
    f.texts[id] = kTexts[i];
    ids.push_back(id);
  }
  const Embeddings vecs = embed_all(f.embedder, kTexts);
  f.tree = build_tree(ids, vecs, exact_pair_stream(vecs));
  f.sparse = build_sparse(f.chunks);
  f.cfg.qa_template_path =
      std::string(HAT_ASSETS_DIR) + "/prompts/agent_qa.txt";
  f.cfg.forced_template_path =
      std::string(HAT_ASSETS_DIR) + "/prompts/agent_qa_forced.txt";
  return f;
}

const std::string kQuestion =
    "What instrument does the founder of the Harbor Quartet play?";
const std::string kSubQuery = "What instrument does Nils Verne play?";

std::vector<MockScriptEntry> two_turn_script() {
  return {
      {"Retrieval time remaining: 3",
       "The documents name the founder of the Harbor Quartet but not the "
       "instrument, so I need the founder's instrument.\n\nRetrieve: " +
           kSubQuery},
      {"Retrieval time remaining: 2",
       "The newly retrieved document states that Nils Verne plays the "
       "cello.\n\nAnswer: cello"},
  };
}

}  // namespace

TEST_CASE("parse_action splits reasoning from the trailing action line") {
  AgentTurn t = parse_action(
      "The documents mention the group but not its base city.\nAnswer: Delhi");
  CHECK(t.action == AgentAction::answer);
  CHECK(t.payload == "Delhi");
  CHECK(t.reasoning ==
        "The documents mention the group but not its base city.");

  t = parse_action("I still need the venue.\nRetrieve: which city hosts the "
                   "winter fair?");
  CHECK(t.action == AgentAction::retrieve);
  CHECK(t.payload == "which city hosts the winter fair?");

  SUBCASE("markers are case-insensitive and tolerate padding") {
    t = parse_action("reason\n  ANSWER:   spaced out  ");
    CHECK(t.action == AgentAction::answer);
    CHECK(t.payload == "spaced out");
  }
  SUBCASE("the scan walks upward past trailing noise") {
    t = parse_action("reasoning here\nAnswer: blue\n\nP.S. ignore this");
    CHECK(t.action == AgentAction::answer);
    CHECK(t.payload == "blue");
    CHECK(t.reasoning == "reasoning here");
  }
  SUBCASE("the lowest action line wins") {
    t = parse_action("Maybe Retrieve: something else first\nAnswer: done");
    CHECK(t.action == AgentAction::answer);
    CHECK(t.payload == "done");
  }
  SUBCASE("multi-line reasoning keeps internal newlines") {
    t = parse_action("line one\nline two\nRetrieve: q");
    CHECK(t.reasoning == "line one\nline two");
  }
}

TEST_CASE("parse_action rejects responses without a usable action") {
  CHECK_THROWS_WITH_AS(parse_action("no marker anywhere in this text"),
                       doctest::Contains("no action line"), DataError);
  CHECK_THROWS_WITH_AS(parse_action("reason\nAnswer:"),
                       doctest::Contains("empty payload"), DataError);
  CHECK_THROWS_AS(parse_action("   \n \n"), DataError);
}

TEST_CASE("two-turn session retrieves on request and answers") {
  AgentFixture f = make_fixture();
  f.cfg.max_retrievals = 4;
  MockChatClient mock(two_turn_script());

  Session s = run_session(kQuestion, f.tree, f.sparse, f.texts, f.embedder,
                          mock, f.cfg);

  CHECK(s.outcome == SessionOutcome::answered);
  CHECK(s.answer == "cello");
  REQUIRE(s.turns.size() == 2);
  CHECK(s.turns[0].action == AgentAction::retrieve);
  CHECK(s.turns[0].payload == kSubQuery);
  CHECK(s.turns[1].action == AgentAction::answer);
  REQUIRE(s.retrieved_sets.size() == 2);
  CHECK(mock.calls() == 2);

  // Turn 1 request: the rendered template plus one fresh user message.
  REQUIRE(mock.requests().size() == 2);
  const auto& first = mock.requests()[0];
  REQUIRE(first.size() == 6);
  CHECK(first[0].role == "system");
  CHECK(first[5].role == "user");
  CHECK(first[5].content.find("Retrieval time remaining: 3") !=
        std::string::npos);
  CHECK(first[5].content.find("User question: " + kQuestion) !=
        std::string::npos);
  CHECK(first[5].content.rfind("Thought:") == first[5].content.size() - 8);
  for (const ScoredChunk& h : s.retrieved_sets[0])
    CHECK(first[5].content.find(f.texts[h.chunk_id]) != std::string::npos);

  // Turn 2 request carries the whole history: the first retrieved set, the
  // first assistant turn, and the new retrieval for the reorganized query.
  const auto& second = mock.requests()[1];
  REQUIRE(second.size() == 8);
  CHECK(second[5] == first[5]);
  CHECK(second[6].role == "assistant");
  CHECK(second[6].content == two_turn_script()[0].reply);
  CHECK(second[7].role == "user");
  CHECK(second[7].content.find("Retrieval time remaining: 2") !=
        std::string::npos);
  for (const ScoredChunk& h : s.retrieved_sets[1])
    CHECK(second[7].content.find(f.texts[h.chunk_id]) != std::string::npos);

  // Final transcript = last request + the answering assistant message.
  REQUIRE(s.messages.size() == 9);
  CHECK(s.messages[8].role == "assistant");

  // Both supporting chunks were retrieved along the way.
  CHECK(s.ledger.contains("q#0"));
  CHECK(s.ledger.contains("q#1"));
  CHECK(!s.ledger.top(5).empty());
}

TEST_CASE("sessions with a scripted mock are reproducible byte for byte") {
  AgentFixture f = make_fixture();
  f.cfg.max_retrievals = 4;
  MockChatClient mock_a(two_turn_script());
  MockChatClient mock_b(two_turn_script());

  Session a = run_session(kQuestion, f.tree, f.sparse, f.texts, f.embedder,
                          mock_a, f.cfg);
  Session b = run_session(kQuestion, f.tree, f.sparse, f.texts, f.embedder,
                          mock_b, f.cfg);
  CHECK(a.messages == b.messages);
  CHECK(a.answer == b.answer);
}

TEST_CASE("an exhausted budget forces the final answer") {
  AgentFixture f = make_fixture();
  f.cfg.max_retrievals = 3;
  std::vector<MockScriptEntry> script = {
      {"Retrieval time remaining: 2",
       "Nothing yet.\n\nRetrieve: harbor quartet founder"},
      {"Retrieval time remaining: 1",
       "Still nothing.\n\nRetrieve: cello player in the quartet"},
      {"no retrieval attempts remaining",
       "The documents never state it outright.\n\nAnswer: Not mentioned"},
  };
  MockChatClient mock(script);

  Session s = run_session(kQuestion, f.tree, f.sparse, f.texts, f.embedder,
                          mock, f.cfg);

  CHECK(s.outcome == SessionOutcome::not_mentioned);
  CHECK(s.answer == "Not mentioned");
  CHECK(s.retrieved_sets.size() == 3);
  CHECK(mock.calls() == 3);
  // The forced turn swaps the countdown for the forced-answer instruction.
  const ChatMessage& last_user = s.messages[s.messages.size() - 2];
  CHECK(last_user.role == "user");
  CHECK(last_user.content.find("Retrieval time remaining:") ==
        std::string::npos);
  CHECK(last_user.content.find("You MUST end your response") !=
        std::string::npos);
}

TEST_CASE("max_retrievals=1 degenerates to single-shot answering") {
  AgentFixture f = make_fixture();
  f.cfg.max_retrievals = 1;
  std::vector<MockScriptEntry> script = {
      {"no retrieval attempts remaining",
       "Going with what the first retrieval gave me.\n\nAnswer: cello"}};
  MockChatClient mock(script);

  Session s = run_session(kQuestion, f.tree, f.sparse, f.texts, f.embedder,
                          mock, f.cfg);
  CHECK(s.outcome == SessionOutcome::answered);
  CHECK(s.retrieved_sets.size() == 1);
  CHECK(mock.calls() == 1);
}

TEST_CASE("a malformed action is retried once with a format reminder") {
  AgentFixture f = make_fixture();
  f.cfg.max_retrievals = 4;

  SUBCASE("the retry recovers") {
    std::vector<MockScriptEntry> script = {
        {"", "I wonder about many things, none of them actionable."},
        {"did not end with", "Answer: cello"},
    };
    MockChatClient mock(script);
    Session s = run_session(kQuestion, f.tree, f.sparse, f.texts, f.embedder,
                            mock, f.cfg);
    CHECK(s.outcome == SessionOutcome::answered);
    CHECK(s.turns.size() == 1);
    CHECK(mock.calls() == 2);
    CHECK(s.retrieved_sets.size() == 1);
  }
  SUBCASE("a second malformed response aborts the session") {
    std::vector<MockScriptEntry> script = {
        {"", "ramble one"},
        {"", "ramble two"},
    };
    MockChatClient mock(script);
    Session s = run_session(kQuestion, f.tree, f.sparse, f.texts, f.embedder,
                            mock, f.cfg);
    CHECK(s.outcome == SessionOutcome::error);
    CHECK(s.error.find("malformed action") != std::string::npos);
    CHECK(s.turns.empty());
    CHECK(s.retrieved_sets.size() == 1);
    // Both bad replies stay in the preserved transcript.
    CHECK(s.messages[s.messages.size() - 1].content == "ramble two");
    CHECK(s.messages[s.messages.size() - 3].content == "ramble one");
  }
}

TEST_CASE("a chat failure preserves the partial session") {
  AgentFixture f = make_fixture();
  f.cfg.max_retrievals = 4;
  MockChatClient mock(std::vector<MockScriptEntry>{});  // throws on call 1

  Session s = run_session(kQuestion, f.tree, f.sparse, f.texts, f.embedder,
                          mock, f.cfg);
  CHECK(s.outcome == SessionOutcome::error);
  CHECK(s.error.find("chat failure") != std::string::npos);
  CHECK(s.retrieved_sets.size() == 1);
  CHECK(s.messages.back().role == "user");
}

TEST_CASE("a direct Not mentioned answer is recorded as such") {
  AgentFixture f = make_fixture();
  f.cfg.max_retrievals = 4;
  std::vector<MockScriptEntry> script = {
      {"", "The corpus is silent on this.\n\nAnswer: Not mentioned"}};
  MockChatClient mock(script);
  Session s = run_session(kQuestion, f.tree, f.sparse, f.texts, f.embedder,
                          mock, f.cfg);
  CHECK(s.outcome == SessionOutcome::not_mentioned);
}

TEST_CASE("reorganized queries reach a different sparse result set") {
  AgentFixture f = make_fixture();
  auto id_set = [&](const std::string& q) {
    std::set<std::string> out;
    for (const SparseHit& h : sparse_search(f.sparse, q, 3))
      out.insert(h.chunk_id);
    return out;
  };
  CHECK(id_set(kQuestion) != id_set(kSubQuery));
}

TEST_CASE("run_session validates its budget") {
  AgentFixture f = make_fixture();
  f.cfg.max_retrievals = 0;
  MockChatClient mock(std::vector<MockScriptEntry>{});
  CHECK_THROWS_AS(run_session(kQuestion, f.tree, f.sparse, f.texts,
                              f.embedder, mock, f.cfg),
                  UsageError);
}

TEST_CASE("summarization_session renders ordered id-prefixed chunks") {
  const std::vector<std::string> texts = {
      "Dawn broke over the quiet valley.",
      "Farmers gathered at the old mill by noon.",
      "A storm rolled in before the evening meal.",
      "By nightfall the river had settled again.",
  };
  std::vector<std::string> ids;
  std::unordered_map<std::string, std::string> text_map;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    ids.push_back("s#" + std::to_string(i));
    text_map[ids.back()] = texts[i];
  }
  HashingEmbedder embedder(64);
  const Embeddings vecs = embed_all(embedder, texts);
  AbstractTree tree = build_tree(ids, vecs, exact_pair_stream(vecs));

  SummarizeConfig cfg;
  cfg.k = 4;
  cfg.response_max_tokens = 150;
  cfg.template_path =
      std::string(HAT_ASSETS_DIR) + "/prompts/agent_summarize.txt";

  std::vector<MockScriptEntry> script = {
      {"User question: Summarize the story.",
       "A single day in the valley, from calm dawn through storm to calm "
       "night."}};
  MockChatClient mock(script);

  const std::string out = summarization_session(
      "Summarize the story.", tree, text_map, embedder, mock, cfg);
  CHECK(out == script[0].reply);

  REQUIRE(mock.requests().size() == 1);
  const auto& msgs = mock.requests()[0];
  REQUIRE(msgs.size() == 2);
  CHECK(msgs[0].role == "system");
  CHECK(msgs[0].content.find("NO MORE THAN 150 WORDS") != std::string::npos);
  CHECK(msgs[1].role == "user");
  // k >= leaf count: every chunk appears, id-prefixed, in corpus order.
  std::vector<std::size_t> at;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    const std::string marker = "[" + std::to_string(i) + "] " + texts[i];
    const std::size_t pos = msgs[1].content.find(marker);
    REQUIRE(pos != std::string::npos);
    at.push_back(pos);
  }
  for (std::size_t i = 1; i < at.size(); ++i) CHECK(at[i - 1] < at[i]);

  SUBCASE("a smaller k keeps the surviving ids in increasing order") {
    cfg.k = 2;
    std::vector<MockScriptEntry> script2 = {{"", "short"}};
    MockChatClient mock2(script2);
    summarization_session("Summarize the story.", tree, text_map, embedder,
                          mock2, cfg);
    const std::string& prompt = mock2.requests()[0][1].content;
    std::vector<std::size_t> found;
    for (std::size_t i = 0; i < texts.size(); ++i) {
      const std::size_t pos = prompt.find("[" + std::to_string(i) + "] ");
      if (pos != std::string::npos) found.push_back(pos);
    }
    CHECK(found.size() == 2);
    CHECK(found[0] < found[1]);
  }
  SUBCASE("k must be positive") {
    cfg.k = 0;
    std::vector<MockScriptEntry> empty;
    MockChatClient mock3(empty);
    CHECK_THROWS_AS(summarization_session("q", tree, text_map, embedder,
                                          mock3, cfg),
                    UsageError);
  }
}
