#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "hat/abstraction.hpp"
#include "hat/agent.hpp"
#include "hat/analysis.hpp"
#include "hat/chat.hpp"
#include "hat/corpus.hpp"
#include "hat/embed.hpp"
#include "hat/errors.hpp"
#include "hat/eval.hpp"
#include "hat/http_clients.hpp"
#include "hat/pairs.hpp"
#include "hat/retrieve.hpp"
#include "hat/sparse.hpp"
#include "hat/tokenize.hpp"
#include "hat/tree.hpp"
#include "hat/tree_io.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hat;

#ifndef HAT_ASSETS_DIR
#define HAT_ASSETS_DIR "assets"
#endif

struct RunConfig {
  // Indexing.
  std::uint32_t dim = 256;
  std::uint64_t seed = 42;
  std::uint32_t target_tokens = 100;
  std::size_t max_children = 40;
  std::string pairs = "exact";  // exact | hnsw | bucketed
  std::size_t hnsw_k = 10;
  std::size_t buckets = 8;
  std::string abstraction = "offline";  // offline | chat
  std::string style = "summative";      // summative | keyword
  // Retrieval.
  std::string fusion = "rrf";  // rrf | rerank
  std::size_t per_retriever_k = 10;
  std::size_t final_k = 5;
  std::size_t max_retrievals = 4;
  std::size_t sum_k = 10;
  // Remote providers; the api key comes from the environment.
  std::string embed_url;
  std::string chat_url;
  std::string rerank_url;
  std::string model;
  std::string api_key;
};

json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path);
  json parsed = json::parse(in, nullptr, false);
  if (parsed.is_discarded()) throw DataError("invalid JSON in " + path);
  return parsed;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  out << content;
}

void apply_config_file(RunConfig& cfg, const std::string& path) {
  const json j = read_json_file(path);
  if (!j.is_object()) throw UsageError("config file must hold a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "dim") cfg.dim = value.get<std::uint32_t>();
    else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
    else if (key == "target_tokens") cfg.target_tokens = value.get<std::uint32_t>();
    else if (key == "max_children") cfg.max_children = value.get<std::size_t>();
    else if (key == "pairs") cfg.pairs = value.get<std::string>();
    else if (key == "hnsw_k") cfg.hnsw_k = value.get<std::size_t>();
    else if (key == "buckets") cfg.buckets = value.get<std::size_t>();
    else if (key == "abstraction") cfg.abstraction = value.get<std::string>();
    else if (key == "style") cfg.style = value.get<std::string>();
    else if (key == "fusion") cfg.fusion = value.get<std::string>();
    else if (key == "per_retriever_k") cfg.per_retriever_k = value.get<std::size_t>();
    else if (key == "final_k") cfg.final_k = value.get<std::size_t>();
    else if (key == "max_retrievals") cfg.max_retrievals = value.get<std::size_t>();
    else if (key == "sum_k") cfg.sum_k = value.get<std::size_t>();
    else if (key == "embed_url") cfg.embed_url = value.get<std::string>();
    else if (key == "chat_url") cfg.chat_url = value.get<std::string>();
    else if (key == "rerank_url") cfg.rerank_url = value.get<std::string>();
    else if (key == "model") cfg.model = value.get<std::string>();
    else throw UsageError("unknown config key: " + key);
  }
}

void apply_env(RunConfig& cfg) {
  if (const char* key = std::getenv("HATRAG_API_KEY")) cfg.api_key = key;
}

EndpointConfig endpoint_for(const RunConfig& cfg, const std::string& url) {
  EndpointConfig e;
  e.base_url = url;
  e.api_key = cfg.api_key;
  e.model = cfg.model;
  return e;
}

std::unique_ptr<Embedder> make_embedder(const RunConfig& cfg) {
  if (!cfg.embed_url.empty())
    return std::make_unique<HttpEmbedder>(endpoint_for(cfg, cfg.embed_url),
                                          cfg.dim);
  return std::make_unique<HashingEmbedder>(cfg.dim, cfg.seed);
}

std::unique_ptr<ChatClient> make_chat(const RunConfig& cfg,
                                      const std::string& mock_path) {
  if (!mock_path.empty())
    return std::make_unique<MockChatClient>(MockChatClient::from_file(mock_path));
  if (!cfg.chat_url.empty())
    return std::make_unique<HttpChatClient>(endpoint_for(cfg, cfg.chat_url));
  throw UsageError("no chat provider: pass --mock FIXTURES or configure chat_url");
}

AbstractionConfig abstraction_config(const RunConfig& cfg) {
  AbstractionConfig a;
  if (cfg.style == "summative") a.style = AbstractStyle::summative;
  else if (cfg.style == "keyword") a.style = AbstractStyle::keyword;
  else throw UsageError("style must be summative or keyword");
  return a;
}

FusionConfig fusion_config(const RunConfig& cfg, std::size_t final_k) {
  FusionConfig f;
  if (cfg.fusion == "rrf") f.strategy = FusionStrategy::rrf;
  else if (cfg.fusion == "rerank") f.strategy = FusionStrategy::rerank;
  else throw UsageError("fusion must be rrf or rerank");
  f.per_retriever_k = cfg.per_retriever_k;
  f.final_k = final_k;
  return f;
}

RerankFn make_rerank(const RunConfig& cfg) {
  if (cfg.fusion != "rerank") return nullptr;
  if (!cfg.rerank_url.empty())
    return HttpReranker(endpoint_for(cfg, cfg.rerank_url));
  return lexical_overlap_rerank;
}

std::string prompt_path(const std::string& name) {
  return std::string(HAT_ASSETS_DIR) + "/prompts/" + name;
}

AgentConfig agent_config(const RunConfig& cfg) {
  AgentConfig a;
  a.max_retrievals = cfg.max_retrievals;
  a.qa_template_path = prompt_path("agent_qa.txt");
  a.forced_template_path = prompt_path("agent_qa_forced.txt");
  return a;
}

// ---------------------------------------------------------------------------
// Index bundle layout: tree.json + embeddings.psie + sparse.json +
// chunks.jsonl + tree.dot + meta.json + stats.json in one directory.

struct Bundle {
  AbstractTree tree;
  SparseIndex sparse;
  std::vector<Chunk> chunks;
  std::unordered_map<std::string, std::string> texts;
  json meta;
};

std::string bundle_file(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

Bundle load_bundle(const std::string& dir) {
  if (!fs::exists(bundle_file(dir, "tree.json")))
    throw DataError("no index bundle at " + dir + " (tree.json missing)");
  Bundle b;
  b.tree = load_tree(bundle_file(dir, "tree.json"));
  b.sparse = load_sparse(bundle_file(dir, "sparse.json"));
  b.chunks = load_chunks_jsonl(bundle_file(dir, "chunks.jsonl"));
  for (const Chunk& c : b.chunks) b.texts[c.chunk_id] = c.text;
  b.meta = read_json_file(bundle_file(dir, "meta.json"));
  return b;
}

// The bundle's meta pins everything the query side must reproduce, most
// importantly the embedder geometry.
void overlay_meta(RunConfig& cfg, const json& meta) {
  cfg.dim = meta.at("dim").get<std::uint32_t>();
  cfg.seed = meta.at("seed").get<std::uint64_t>();
  cfg.target_tokens = meta.at("target_tokens").get<std::uint32_t>();
  cfg.max_children = meta.at("max_children").get<std::size_t>();
  cfg.style = meta.at("style").get<std::string>();
}

json meta_json(const RunConfig& cfg) {
  return json{{"dim", cfg.dim},
              {"seed", cfg.seed},
              {"target_tokens", cfg.target_tokens},
              {"max_children", cfg.max_children},
              {"pairs", cfg.pairs},
              {"abstraction", cfg.abstraction},
              {"style", cfg.style}};
}

json tree_stats(const AbstractTree& t, const std::vector<Chunk>& chunks) {
  std::size_t abstract_nodes = 0;
  std::size_t max_fanout = 0;
  std::uint64_t abstract_tokens = 0;
  for (const TreeNode& n : t.nodes) {
    if (n.is_leaf) continue;
    ++abstract_nodes;
    max_fanout = std::max(max_fanout, n.children.size());
    abstract_tokens += count_tokens(n.abstract_text);
  }
  std::uint64_t leaf_tokens = 0;
  for (const Chunk& c : chunks) leaf_tokens += c.token_count;
  const double compression =
      leaf_tokens == 0 ? 0.0
                       : 1.0 - static_cast<double>(abstract_tokens) /
                                   static_cast<double>(leaf_tokens);
  return json{{"leaves", t.leaf_count},
              {"abstract_nodes", abstract_nodes},
              {"depth", tree_depth(t)},
              {"max_fanout", max_fanout},
              {"leaf_tokens", leaf_tokens},
              {"abstract_tokens", abstract_tokens},
              {"compression_rate", compression}};
}

void print_stats(const json& s) {
  std::cout << "leaves            " << s.at("leaves").get<std::uint64_t>() << "\n"
            << "abstract nodes    " << s.at("abstract_nodes").get<std::uint64_t>() << "\n"
            << "depth             " << s.at("depth").get<std::uint64_t>() << "\n"
            << "max fanout        " << s.at("max_fanout").get<std::uint64_t>() << "\n"
            << "leaf tokens       " << s.at("leaf_tokens").get<std::uint64_t>() << "\n"
            << "abstract tokens   " << s.at("abstract_tokens").get<std::uint64_t>() << "\n";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f",
                s.at("compression_rate").get<double>());
  std::cout << "compression rate  " << buf << "\n";
}

std::unique_ptr<Abstractor> make_abstractor(
    const RunConfig& cfg, const AbstractionConfig& acfg,
    const std::vector<Chunk>& chunks, std::unique_ptr<ChatClient>& chat_keep,
    const std::string& mock_path) {
  if (cfg.abstraction == "offline")
    return std::make_unique<OfflineAbstractor>(acfg, chunks);
  if (cfg.abstraction == "chat") {
    chat_keep = make_chat(cfg, mock_path);
    const std::string tpl = acfg.style == AbstractStyle::summative
                                ? prompt_path("abstract_summary.txt")
                                : prompt_path("abstract_keywords.txt");
    return std::make_unique<ChatAbstractor>(acfg, *chat_keep, tpl);
  }
  throw UsageError("abstraction must be offline or chat");
}

// ---------------------------------------------------------------------------
// Commands.

int cmd_index(RunConfig cfg, const std::string& corpus_path,
              const std::string& out_dir, const std::string& mock_path,
              bool resume) {
  fs::create_directories(out_dir);
  const std::vector<Document> docs = load_corpus_jsonl(corpus_path);
  ChunkingConfig ccfg;
  ccfg.target_tokens = cfg.target_tokens;
  const std::vector<Chunk> chunks = chunk_corpus(docs, ccfg);
  if (chunks.empty()) throw DataError("corpus produced no chunks");

  std::vector<std::string> ids;
  std::vector<std::string> texts;
  std::unordered_map<std::string, std::string> text_of;
  for (const Chunk& c : chunks) {
    ids.push_back(c.chunk_id);
    texts.push_back(c.text);
    text_of[c.chunk_id] = c.text;
  }

  std::unique_ptr<Embedder> embedder = make_embedder(cfg);
  const Embeddings vecs = embed_all(*embedder, texts);

  const std::string partial_json = bundle_file(out_dir, "tree.partial.json");
  AbstractTree tree;
  BuildStats bstats;
  if (resume && fs::exists(partial_json)) {
    tree = load_tree(partial_json);
    if (tree.leaf_count != ids.size())
      throw DataError("checkpoint does not match the corpus: " +
                      std::to_string(tree.leaf_count) + " leaves vs " +
                      std::to_string(ids.size()) + " chunks");
    std::cerr << "resuming abstraction from " << partial_json << "\n";
  } else {
    std::vector<SimilarPair> stream;
    if (cfg.pairs == "exact") {
      stream = exact_pair_stream(vecs);
    } else if (cfg.pairs == "hnsw") {
      HnswConfig hc;
      hc.seed = cfg.seed;
      stream = hnsw_pair_stream(vecs, cfg.hnsw_k, hc);
    } else if (cfg.pairs == "bucketed") {
      BucketConfig bc;
      bc.seed = cfg.seed;
      stream = bucketed_pair_stream(vecs, cfg.buckets, bc);
    } else {
      throw UsageError("pairs must be exact, hnsw, or bucketed");
    }
    tree = build_forest(ids, vecs, stream, &bstats);
    if (component_roots(tree).size() > 1) connect_residual(tree);
    rebalance(tree, cfg.max_children);
  }
  validate_tree(tree, cfg.max_children);

  const AbstractionConfig acfg = abstraction_config(cfg);
  std::unique_ptr<ChatClient> chat_keep;
  std::unique_ptr<Abstractor> abstractor =
      make_abstractor(cfg, acfg, chunks, chat_keep, mock_path);
  AbstractionStats astats;
  try {
    astats = abstract_tree(tree, *abstractor, *embedder, text_of, acfg);
  } catch (...) {
    save_tree(partial_json, tree, "embeddings.partial.psie");
    std::cerr << "abstraction failed; checkpoint saved, rerun with --resume\n";
    throw;
  }
  std::error_code ec;
  fs::remove(partial_json, ec);
  fs::remove(bundle_file(out_dir, "embeddings.partial.psie"), ec);

  const SparseIndex sparse = build_sparse(chunks);
  save_chunks_jsonl(bundle_file(out_dir, "chunks.jsonl"), chunks);
  save_tree(bundle_file(out_dir, "tree.json"), tree);
  save_sparse(bundle_file(out_dir, "sparse.json"), sparse);
  write_file(bundle_file(out_dir, "tree.dot"), export_dot(tree));
  write_file(bundle_file(out_dir, "meta.json"), meta_json(cfg).dump(2) + "\n");

  json stats = tree_stats(tree, chunks);
  stats["documents"] = docs.size();
  stats["abstraction_calls"] = astats.calls;
  stats["pairs_consumed"] = bstats.pairs_consumed;
  stats["effective_steps"] = bstats.effective_steps;
  write_file(bundle_file(out_dir, "stats.json"), stats.dump(2) + "\n");
  print_stats(stats);
  std::cout << "bundle written to " << out_dir << "\n";
  return 0;
}

std::string sources_label(std::uint8_t bits) {
  if (bits == (kSourceTree | kSourceSparse)) return "tree+sparse";
  if (bits == kSourceTree) return "tree";
  if (bits == kSourceSparse) return "sparse";
  return "-";
}

std::string snippet(const std::string& text, std::size_t max_len = 60) {
  std::string flat = collapse_whitespace(text);
  if (flat.size() > max_len) flat = flat.substr(0, max_len) + "...";
  return flat;
}

void print_hits(const std::vector<ScoredChunk>& hits,
                const std::unordered_map<std::string, std::string>& texts) {
  char buf[64];
  for (std::size_t i = 0; i < hits.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.6f", hits[i].score);
    std::cout << (i + 1) << ". " << hits[i].chunk_id << "  " << buf << "  "
              << sources_label(hits[i].sources);
    auto it = texts.find(hits[i].chunk_id);
    if (it != texts.end()) std::cout << "  " << snippet(it->second);
    std::cout << "\n";
  }
}

int cmd_query(RunConfig cfg, const std::string& bundle_dir,
              const std::string& question, std::size_t k,
              const std::string& arm) {
  Bundle b = load_bundle(bundle_dir);
  overlay_meta(cfg, b.meta);
  std::unique_ptr<Embedder> embedder = make_embedder(cfg);
  const Embeddings q = embed_all(*embedder, {question});

  if (arm == "tree-only") {
    const TreeSearchResult r = tree_search(b.tree, q.at(0), k);
    print_hits(r.hits, b.texts);
  } else if (arm == "sparse-only") {
    std::vector<ScoredChunk> hits;
    for (const SparseHit& h : sparse_search(b.sparse, question, k))
      hits.push_back({h.chunk_id, h.score, kSourceSparse});
    print_hits(hits, b.texts);
  } else if (arm == "hybrid") {
    const RetrieveResult r =
        hybrid_retrieve(b.tree, b.sparse, b.texts, q.at(0), question,
                        fusion_config(cfg, k), make_rerank(cfg));
    if (r.used_fallback)
      std::cerr << "warning: reranker failed, fell back to rrf\n";
    print_hits(r.chunks, b.texts);
  } else {
    throw UsageError("arm must be hybrid, tree-only, or sparse-only");
  }
  return 0;
}

std::string transcript_text(const Session& s) {
  std::ostringstream out;
  for (const ChatMessage& m : s.messages)
    out << "### " << m.role << "\n" << m.content << "\n\n";
  out << "--- outcome: ";
  switch (s.outcome) {
    case SessionOutcome::answered: out << "answered"; break;
    case SessionOutcome::not_mentioned: out << "not_mentioned"; break;
    case SessionOutcome::error: out << "error: " << s.error; break;
  }
  out << "\n--- answer: " << s.answer << "\n";
  return out.str();
}

int cmd_agent(RunConfig cfg, const std::string& bundle_dir,
              const std::string& question, const std::string& mock_path,
              std::string transcript_path) {
  Bundle b = load_bundle(bundle_dir);
  overlay_meta(cfg, b.meta);
  std::unique_ptr<Embedder> embedder = make_embedder(cfg);
  std::unique_ptr<ChatClient> chat = make_chat(cfg, mock_path);

  const Session s =
      run_session(question, b.tree, b.sparse, b.texts, *embedder, *chat,
                  agent_config(cfg), fusion_config(cfg, cfg.final_k),
                  make_rerank(cfg));

  if (transcript_path.empty())
    transcript_path = bundle_file(bundle_dir, "session.log");
  write_file(transcript_path, transcript_text(s));

  for (std::size_t i = 0; i < s.turns.size(); ++i) {
    const AgentTurn& t = s.turns[i];
    std::cout << "turn " << (i + 1) << ": "
              << (t.action == AgentAction::retrieve ? "Retrieve: " : "Answer: ")
              << t.payload << "\n";
  }
  std::cout << "retrievals used: " << s.retrieved_sets.size() << "\n"
            << "transcript: " << transcript_path << "\n";
  if (s.outcome == SessionOutcome::error)
    throw EndpointError("session failed: " + s.error);
  std::cout << s.answer << "\n";
  return 0;
}

// Per-question scripts: {"sessions": [{"script": [...]}, ...]} runs one
// fresh client per question; {"script": [...]} shares one ordered script
// across the whole run.
std::vector<std::unique_ptr<ChatClient>> eval_clients(
    const RunConfig& cfg, const std::string& mock_path, std::size_t n) {
  std::vector<std::unique_ptr<ChatClient>> clients;
  if (mock_path.empty()) {
    for (std::size_t i = 0; i < n; ++i) clients.push_back(make_chat(cfg, ""));
    return clients;
  }
  const json j = read_json_file(mock_path);
  if (j.contains("sessions")) {
    const json& sessions = j.at("sessions");
    if (sessions.size() != n)
      throw DataError("fixture has " + std::to_string(sessions.size()) +
                      " sessions for " + std::to_string(n) + " questions");
    for (const json& s : sessions) {
      std::vector<MockScriptEntry> script;
      for (const json& e : s.at("script"))
        script.push_back({e.value("expect", ""), e.at("reply").get<std::string>()});
      clients.push_back(std::make_unique<MockChatClient>(std::move(script)));
    }
    return clients;
  }
  // One shared script: the same client object answers every session.
  auto shared = std::make_shared<MockChatClient>(MockChatClient::from_file(mock_path));
  struct SharedClient : ChatClient {
    std::shared_ptr<MockChatClient> inner;
    explicit SharedClient(std::shared_ptr<MockChatClient> c) : inner(std::move(c)) {}
    std::string complete(const std::vector<ChatMessage>& m) override {
      return inner->complete(m);
    }
  };
  for (std::size_t i = 0; i < n; ++i)
    clients.push_back(std::make_unique<SharedClient>(shared));
  return clients;
}

std::vector<json> read_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path);
  std::vector<json> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json row = json::parse(line, nullptr, false);
    if (row.is_discarded())
      throw DataError(path + ":" + std::to_string(lineno) + ": invalid JSON");
    rows.push_back(std::move(row));
  }
  return rows;
}

int cmd_eval(RunConfig cfg, const std::string& bundle_dir,
             const std::string& qa_path, const std::string& mock_path,
             const std::string& metric, const std::string& records_path) {
  Bundle b = load_bundle(bundle_dir);
  overlay_meta(cfg, b.meta);
  std::unique_ptr<Embedder> embedder = make_embedder(cfg);
  const std::vector<json> rows = read_jsonl(qa_path);
  if (rows.empty()) throw DataError("qa file " + qa_path + " has no records");
  std::vector<std::unique_ptr<ChatClient>> clients =
      eval_clients(cfg, mock_path, rows.size());

  std::vector<json> records;
  char buf[64];

  if (metric == "rouge-l") {
    SummarizeConfig scfg;
    scfg.k = cfg.sum_k;
    scfg.template_path = prompt_path("agent_summarize.txt");
    double rouge_sum = 0.0;
    std::size_t errors = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const std::string query = rows[i].at("query").get<std::string>();
      const std::string reference = rows[i].at("reference").get<std::string>();
      json rec = {{"query", query}, {"reference", reference}};
      try {
        const std::string pred = summarization_session(
            query, b.tree, b.texts, *embedder, *clients[i], scfg);
        const double score = rouge_l(pred, reference);
        rouge_sum += score;
        rec["pred"] = pred;
        rec["rouge_l"] = score;
      } catch (const std::exception& e) {
        ++errors;
        rec["error"] = e.what();
        rec["rouge_l"] = 0.0;
      }
      records.push_back(std::move(rec));
    }
    const double n = static_cast<double>(rows.size());
    std::cout << "questions      " << rows.size() << "\n";
    std::snprintf(buf, sizeof buf, "%.4f", rouge_sum / n);
    std::cout << "rouge-l        " << buf << "\n"
              << "errors         " << errors << "\n";
  } else if (metric == "em-f1") {
    double em_sum = 0.0, f1_sum = 0.0, r2_sum = 0.0, r5_sum = 0.0;
    std::size_t with_gold = 0, not_mentioned = 0, errors = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const std::string query = rows[i].at("query").get<std::string>();
      std::vector<std::string> answers;
      for (const json& a : rows[i].at("answers"))
        answers.push_back(a.get<std::string>());
      const Session s =
          run_session(query, b.tree, b.sparse, b.texts, *embedder, *clients[i],
                      agent_config(cfg), fusion_config(cfg, cfg.final_k),
                      make_rerank(cfg));
      json rec = {{"query", query}, {"gold", answers}};
      if (s.outcome == SessionOutcome::error) {
        ++errors;
        rec["error"] = s.error;
      }
      if (s.outcome == SessionOutcome::not_mentioned) ++not_mentioned;
      const QaJudgment judgment = judge_qa(s.answer, answers);
      em_sum += judgment.em;
      f1_sum += judgment.f1;
      rec["pred"] = s.answer;
      rec["em"] = judgment.em;
      rec["f1"] = judgment.f1;
      std::vector<std::string> topk;
      for (const ScoredChunk& h : s.ledger.top(5)) topk.push_back(h.chunk_id);
      rec["topk"] = topk;
      if (rows[i].contains("gold_ids") && !rows[i].at("gold_ids").empty()) {
        std::vector<std::string> gold_ids;
        for (const json& g : rows[i].at("gold_ids"))
          gold_ids.push_back(g.get<std::string>());
        const double r2 = recall_at_k(topk, gold_ids, 2);
        const double r5 = recall_at_k(topk, gold_ids, 5);
        r2_sum += r2;
        r5_sum += r5;
        ++with_gold;
        rec["recall_at_2"] = r2;
        rec["recall_at_5"] = r5;
      }
      records.push_back(std::move(rec));
    }
    const double n = static_cast<double>(rows.size());
    std::cout << "questions      " << rows.size() << "\n";
    std::snprintf(buf, sizeof buf, "%.4f", em_sum / n);
    std::cout << "exact match    " << buf << "\n";
    std::snprintf(buf, sizeof buf, "%.4f", f1_sum / n);
    std::cout << "token f1       " << buf << "\n";
    if (with_gold > 0) {
      std::snprintf(buf, sizeof buf, "%.4f", r2_sum / static_cast<double>(with_gold));
      std::cout << "recall@2       " << buf << "\n";
      std::snprintf(buf, sizeof buf, "%.4f", r5_sum / static_cast<double>(with_gold));
      std::cout << "recall@5       " << buf << "\n";
    }
    std::snprintf(buf, sizeof buf, "%.4f", static_cast<double>(not_mentioned) / n);
    std::cout << "not mentioned  " << buf << "\n"
              << "errors         " << errors << "\n";
  } else {
    throw UsageError("metric must be em-f1 or rouge-l");
  }

  if (!records_path.empty()) {
    std::ostringstream out;
    for (const json& r : records) out << r.dump() << "\n";
    write_file(records_path, out.str());
    std::cout << "records: " << records_path << "\n";
  }
  return 0;
}

int cmd_insert(RunConfig cfg, const std::string& bundle_dir,
               const std::string& corpus_path, bool batch) {
  Bundle b = load_bundle(bundle_dir);
  overlay_meta(cfg, b.meta);
  cfg.abstraction = b.meta.value("abstraction", "offline");

  const std::vector<Document> docs = load_corpus_jsonl(corpus_path);
  ChunkingConfig ccfg;
  ccfg.target_tokens = cfg.target_tokens;
  const std::vector<Chunk> new_chunks = chunk_corpus(docs, ccfg);
  if (new_chunks.empty()) throw DataError("insert corpus produced no chunks");
  std::unordered_set<std::string> existing;
  for (const Chunk& c : b.chunks) existing.insert(c.chunk_id);
  for (const Chunk& c : new_chunks)
    if (existing.count(c.chunk_id))
      throw DataError("chunk id already indexed: " + c.chunk_id);

  std::unique_ptr<Embedder> embedder = make_embedder(cfg);
  std::vector<std::string> new_ids;
  std::vector<std::string> new_texts;
  for (const Chunk& c : new_chunks) {
    new_ids.push_back(c.chunk_id);
    new_texts.push_back(c.text);
  }
  const Embeddings vecs = embed_all(*embedder, new_texts);

  const json before = tree_stats(b.tree, b.chunks);
  if (batch) {
    insert_batch(b.tree, new_ids, vecs);
  } else {
    for (std::size_t i = 0; i < new_ids.size(); ++i) {
      std::vector<float> v(vecs.at(i).begin(), vecs.at(i).end());
      insert_leaf(b.tree, new_ids[i], v);
    }
  }
  rebalance(b.tree, cfg.max_children);
  validate_tree(b.tree, cfg.max_children);

  std::vector<Chunk> all_chunks = b.chunks;
  all_chunks.insert(all_chunks.end(), new_chunks.begin(), new_chunks.end());
  for (const Chunk& c : new_chunks) b.texts[c.chunk_id] = c.text;

  const AbstractionConfig acfg = abstraction_config(cfg);
  std::unique_ptr<ChatClient> chat_keep;
  std::unique_ptr<Abstractor> abstractor =
      make_abstractor(cfg, acfg, all_chunks, chat_keep, "");
  const AbstractionStats astats =
      abstract_tree(b.tree, *abstractor, *embedder, b.texts, acfg);

  const SparseIndex sparse = build_sparse(all_chunks);
  save_chunks_jsonl(bundle_file(bundle_dir, "chunks.jsonl"), all_chunks);
  save_tree(bundle_file(bundle_dir, "tree.json"), b.tree);
  save_sparse(bundle_file(bundle_dir, "sparse.json"), sparse);
  write_file(bundle_file(bundle_dir, "tree.dot"), export_dot(b.tree));
  json stats = tree_stats(b.tree, all_chunks);
  stats["documents"] = json();  // unknown after incremental updates
  stats["abstraction_calls"] = astats.calls;
  write_file(bundle_file(bundle_dir, "stats.json"), stats.dump(2) + "\n");

  std::cout << "inserted " << new_chunks.size() << " chunks ("
            << (batch ? "batch" : "single") << ")\n"
            << "leaves   " << before.at("leaves").get<std::uint64_t>() << " -> "
            << stats.at("leaves").get<std::uint64_t>() << "\n"
            << "depth    " << before.at("depth").get<std::uint64_t>() << " -> "
            << stats.at("depth").get<std::uint64_t>() << "\n"
            << "abstract " << before.at("abstract_nodes").get<std::uint64_t>()
            << " -> " << stats.at("abstract_nodes").get<std::uint64_t>() << "\n"
            << "abstraction calls " << astats.calls << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// analyze subcommands.

int cmd_analyze_cost(const std::string& tree_path, const std::string& csv) {
  const AbstractTree t = load_tree(tree_path);
  const CostReport r = dasgupta_cost(t, false);
  std::cout << "total cost  " << r.total << "\n"
            << "cross pairs " << r.cross << "\n";
  for (std::size_t i = 0; i < r.subtree_costs.size(); ++i)
    std::cout << "subtree " << i << "   " << r.subtree_costs[i] << "\n";
  if (!csv.empty()) {
    std::ostringstream out;
    out << "component,cost\n";
    for (std::size_t i = 0; i < r.subtree_costs.size(); ++i)
      out << "subtree_" << i << "," << r.subtree_costs[i] << "\n";
    out << "cross," << r.cross << "\ntotal," << r.total << "\n";
    write_file(csv, out.str());
  }
  return 0;
}

int cmd_analyze_theorem2(std::int64_t k, std::int64_t m, bool sweep,
                         std::int64_t max_n, const std::string& csv) {
  std::ostringstream rows;
  rows << "k,m,n,cost_change\n";
  if (sweep) {
    std::size_t cases = 0;
    for (std::int64_t kk = 3; 3 * kk <= max_n; ++kk)
      for (std::int64_t mm = 3; kk * mm <= max_n; ++mm) {
        const std::int64_t diff = verify_theorem2(kk, mm);
        std::cout << "k=" << kk << " m=" << mm << " n=" << kk * mm
                  << " cost_change=" << diff << "\n";
        rows << kk << "," << mm << "," << kk * mm << "," << diff << "\n";
        ++cases;
      }
    std::cout << cases << " balanced-star moves verified\n";
  } else {
    const std::int64_t diff = verify_theorem2(k, m);
    rows << k << "," << m << "," << k * m << "," << diff << "\n";
    std::cout << diff << "\n";
  }
  if (!csv.empty()) write_file(csv, rows.str());
  return 0;
}

std::vector<std::int64_t> parse_sizes(const std::string& csv_sizes) {
  std::vector<std::int64_t> sizes;
  std::stringstream ss(csv_sizes);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      sizes.push_back(std::stoll(part));
    } catch (const std::exception&) {
      throw UsageError("bad branch size: " + part);
    }
  }
  return sizes;
}

int cmd_analyze_theorem3(const std::string& sizes_csv, std::size_t i,
                         std::size_t j, bool sweep, std::int64_t max_n,
                         const std::string& csv) {
  std::ostringstream rows;
  rows << "sizes,i,j,cost_change\n";
  if (sweep) {
    std::size_t cases = 0;
    for (std::int64_t a = 2; a <= max_n; ++a)
      for (std::int64_t b = 2; a + b <= max_n; ++b)
        for (std::int64_t c = 2; a + b + c <= max_n; ++c) {
          const std::vector<std::int64_t> sizes = {a, b, c};
          for (std::size_t mi = 0; mi < 3; ++mi) {
            bool strict_min = true;
            for (std::size_t o = 0; o < 3; ++o)
              if (o != mi && sizes[o] <= sizes[mi]) strict_min = false;
            if (!strict_min) continue;
            for (std::size_t mj = 0; mj < 3; ++mj) {
              if (mj == mi) continue;
              const std::int64_t diff = verify_theorem3(sizes, mi, mj);
              rows << a << ";" << b << ";" << c << "," << mi << "," << mj
                   << "," << diff << "\n";
              ++cases;
            }
          }
        }
    std::cout << cases << " minority-absorption moves verified (n <= " << max_n
              << ")\n";
  } else {
    const std::int64_t diff = verify_theorem3(parse_sizes(sizes_csv), i, j);
    std::cout << diff << "\n";
    rows << sizes_csv << "," << i << "," << j << "," << diff << "\n";
  }
  if (!csv.empty()) write_file(csv, rows.str());
  return 0;
}

int cmd_analyze_uniform(std::uint64_t seed, std::size_t major_count,
                        std::size_t minor_count, double separation,
                        double major_std, double minor_std,
                        const std::string& csv) {
  KmeansDemoConfig cfg;
  cfg.mixture = {{major_count, {0.0, 0.0}, major_std},
                 {minor_count, {separation, 0.0}, minor_std}};
  cfg.seed = seed;
  const KmeansDemoResult r = kmeans_demo(cfg);
  std::ostringstream rows;
  rows << "step,cluster,centroid_x,centroid_y,size,objective\n";
  char buf[64];
  for (std::size_t s = 0; s < r.steps.size(); ++s) {
    const ClusterState& st = r.steps[s];
    std::vector<std::size_t> sizes(st.centroids.size(), 0);
    for (std::uint32_t a : st.assignments) ++sizes[a];
    std::snprintf(buf, sizeof buf, "%.6f", st.objective);
    std::cout << "step " << s << "  objective " << buf << "  sizes";
    for (std::size_t c = 0; c < sizes.size(); ++c)
      std::cout << " " << sizes[c];
    std::cout << "\n";
    for (std::size_t c = 0; c < st.centroids.size(); ++c) {
      rows << s << "," << c << "," << st.centroids[c].x << ","
           << st.centroids[c].y << "," << sizes[c] << "," << st.objective
           << "\n";
    }
  }
  std::cout << "final sizes:";
  for (std::size_t c : r.final_sizes) std::cout << " " << c;
  std::cout << "\n";
  if (!csv.empty()) write_file(csv, rows.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  RunConfig cfg;
  // The config file loads before flag parsing so explicit flags override it.
  for (int i = 1; i + 1 < argc; ++i)
    if (std::string(argv[i]) == "--config") {
      try {
        apply_config_file(cfg, argv[i + 1]);
      } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(ExitCode::usage);
      } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(ExitCode::data);
      }
    }
  apply_env(cfg);

  CLI::App app{"abstract-tree indexing, retrieval, and analysis toolkit"};
  app.require_subcommand(1);
  app.fallthrough();  // lets subcommands accept the global --config flag
  std::string config_path;
  app.add_option("--config", config_path, "JSON config file (flags override)");

  std::string corpus_path, bundle_dir, question, mock_path, transcript_path;
  std::string qa_path, metric = "em-f1", records_path, arm = "hybrid";
  std::string tree_path, csv_path, sizes_csv = "2,4,3";
  bool resume = false, batch = false, sweep = false;
  std::size_t k = 5, idx_i = 0, idx_j = 1;
  std::int64_t t2_k = 3, t2_m = 3, max_n = 0;
  std::uint64_t u_seed = 42;
  std::size_t major_count = 300, minor_count = 30;
  double separation = 2.0, major_std = 1.0, minor_std = 0.4;

  auto add_tuning = [&](CLI::App* c) {
    c->add_option("--dim", cfg.dim, "embedding width");
    c->add_option("--seed", cfg.seed, "master seed");
    c->add_option("--fusion", cfg.fusion, "rrf | rerank");
    c->add_option("--per-retriever-k", cfg.per_retriever_k,
                  "candidates per retriever");
    c->add_option("--final-k", cfg.final_k, "fused result count");
    c->add_option("--max-retrievals", cfg.max_retrievals,
                  "agent retrieval budget");
  };

  CLI::App* c_index = app.add_subcommand("index", "build an index bundle");
  c_index->add_option("--corpus", corpus_path, "JSONL corpus")->required();
  c_index->add_option("--out", bundle_dir, "bundle directory")->required();
  c_index->add_option("--pairs", cfg.pairs, "exact | hnsw | bucketed");
  c_index->add_option("--abstraction", cfg.abstraction, "offline | chat");
  c_index->add_option("--style", cfg.style, "summative | keyword");
  c_index->add_option("--target-tokens", cfg.target_tokens, "chunk size");
  c_index->add_option("--max-children", cfg.max_children, "fanout cap");
  c_index->add_option("--hnsw-k", cfg.hnsw_k, "neighbors per point");
  c_index->add_option("--buckets", cfg.buckets, "bucket count");
  c_index->add_option("--mock", mock_path, "scripted chat fixture");
  c_index->add_flag("--resume", resume, "resume from a checkpoint");
  add_tuning(c_index);

  CLI::App* c_query = app.add_subcommand("query", "one hybrid retrieval");
  c_query->add_option("--bundle", bundle_dir, "bundle directory")->required();
  c_query->add_option("--question", question, "query text")->required();
  c_query->add_option("--k", k, "results to print");
  c_query->add_option("--arm", arm, "hybrid | tree-only | sparse-only");
  add_tuning(c_query);

  CLI::App* c_agent = app.add_subcommand("agent", "retrieval-and-answer loop");
  c_agent->add_option("--bundle", bundle_dir, "bundle directory")->required();
  c_agent->add_option("--question", question, "question")->required();
  c_agent->add_option("--mock", mock_path, "scripted chat fixture");
  c_agent->add_option("--transcript", transcript_path, "session log path");
  add_tuning(c_agent);

  CLI::App* c_eval = app.add_subcommand("eval", "run a qa or summary set");
  c_eval->add_option("--bundle", bundle_dir, "bundle directory")->required();
  c_eval->add_option("--qa", qa_path, "JSONL eval set")->required();
  c_eval->add_option("--mock", mock_path, "scripted chat fixture");
  c_eval->add_option("--metric", metric, "em-f1 | rouge-l");
  c_eval->add_option("--records", records_path, "per-question JSONL output");
  c_eval->add_option("--sum-k", cfg.sum_k, "chunks per summary prompt");
  add_tuning(c_eval);

  CLI::App* c_insert = app.add_subcommand("insert", "add documents");
  c_insert->add_option("--bundle", bundle_dir, "bundle directory")->required();
  c_insert->add_option("--corpus", corpus_path, "JSONL with new docs")->required();
  c_insert->add_flag("--batch", batch, "join as one subtree");

  CLI::App* c_analyze = app.add_subcommand("analyze", "cost-theory reports");
  c_analyze->require_subcommand(1);
  CLI::App* a_cost = c_analyze->add_subcommand("cost", "cost decomposition");
  a_cost->add_option("--tree", tree_path, "tree JSON file")->required();
  a_cost->add_option("--csv", csv_path, "CSV output path");
  CLI::App* a_t2 = c_analyze->add_subcommand("theorem2", "balanced-star move");
  a_t2->add_option("--k", t2_k, "branch count");
  a_t2->add_option("--m", t2_m, "leaves per branch");
  a_t2->add_flag("--sweep", sweep, "verify every size up to --max-n");
  a_t2->add_option("--max-n", max_n, "sweep leaf bound (default 15)");
  a_t2->add_option("--csv", csv_path, "CSV output path");
  CLI::App* a_t3 = c_analyze->add_subcommand("theorem3", "minority absorption");
  a_t3->add_option("--sizes", sizes_csv, "branch sizes, comma separated");
  a_t3->add_option("--i", idx_i, "minor branch index");
  a_t3->add_option("--j", idx_j, "source branch index");
  a_t3->add_flag("--sweep", sweep, "verify every k=3 vector up to --max-n");
  a_t3->add_option("--max-n", max_n, "sweep leaf bound (default 12)");
  a_t3->add_option("--csv", csv_path, "CSV output path");
  CLI::App* a_uni = c_analyze->add_subcommand("uniform", "k-means size drift");
  a_uni->add_option("--seed", u_seed, "sampling seed");
  a_uni->add_option("--major", major_count, "major component size");
  a_uni->add_option("--minor", minor_count, "minor component size");
  a_uni->add_option("--separation", separation, "center distance");
  a_uni->add_option("--major-std", major_std, "major stddev");
  a_uni->add_option("--minor-std", minor_std, "minor stddev");
  a_uni->add_option("--csv", csv_path, "CSV output path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::usage);
  }

  try {
    if (c_index->parsed())
      return cmd_index(cfg, corpus_path, bundle_dir, mock_path, resume);
    if (c_query->parsed())
      return cmd_query(cfg, bundle_dir, question, k, arm);
    if (c_agent->parsed())
      return cmd_agent(cfg, bundle_dir, question, mock_path, transcript_path);
    if (c_eval->parsed())
      return cmd_eval(cfg, bundle_dir, qa_path, mock_path, metric,
                      records_path);
    if (c_insert->parsed())
      return cmd_insert(cfg, bundle_dir, corpus_path, batch);
    if (a_cost->parsed()) return cmd_analyze_cost(tree_path, csv_path);
    if (a_t2->parsed())
      return cmd_analyze_theorem2(t2_k, t2_m, sweep,
                                  max_n > 0 ? max_n : 15, csv_path);
    if (a_t3->parsed())
      return cmd_analyze_theorem3(sizes_csv, idx_i, idx_j, sweep,
                                  max_n > 0 ? max_n : 12, csv_path);
    if (a_uni->parsed())
      return cmd_analyze_uniform(u_seed, major_count, minor_count, separation,
                                 major_std, minor_std, csv_path);
    throw UsageError("no command selected");
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::usage);
  } catch (const EndpointError& e) {
    std::cerr << "error: " << e.what() << " (attempts: " << e.attempts
              << ")\n";
    return static_cast<int>(ExitCode::endpoint);
  } catch (const VerificationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::verification);
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::data);
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::data);
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::verification);
  }
}
