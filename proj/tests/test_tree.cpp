#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "hat/embed.hpp"
#include "hat/errors.hpp"
#include "hat/tree.hpp"
#include "hat/tree_io.hpp"

using namespace hat;
namespace fs = std::filesystem;

namespace {

std::vector<std::string> ids(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back("c#" + std::to_string(i));
  }
  return out;
}

// n orthogonal-ish unit vectors (identity rows), handy when similarity values
// are dictated by the hand-written stream anyway.
Embeddings unit_rows(std::size_t n) {
  Embeddings m;
  m.dim = static_cast<std::uint32_t>(n);
  m.data.assign(n * n, 0.0f);
  for (std::size_t i = 0; i < n; ++i) m.data[i * n + i] = 1.0f;
  return m;
}

std::vector<SimilarPair> stream_of(
    std::initializer_list<std::pair<std::uint32_t, std::uint32_t>> pairs) {
  std::vector<SimilarPair> out;
  float score = 1.0f;
  for (auto [i, j] : pairs) {
    out.push_back(SimilarPair{score, i, j});
    score -= 0.01f;
  }
  return out;
}

// A hand-built star: `n` leaves under one root.
AbstractTree star(std::size_t n) {
  AbstractTree t;
  t.leaf_count = static_cast<std::uint32_t>(n);
  for (std::size_t i = 0; i < n; ++i) {
    TreeNode leaf;
    leaf.id = static_cast<NodeId>(i);
    leaf.is_leaf = true;
    leaf.chunk_id = "c#" + std::to_string(i);
    leaf.parent = static_cast<NodeId>(n);
    t.nodes.push_back(std::move(leaf));
  }
  TreeNode root;
  root.id = static_cast<NodeId>(n);
  for (std::size_t i = 0; i < n; ++i) {
    root.children.push_back(static_cast<NodeId>(i));
  }
  t.nodes.push_back(std::move(root));
  t.root = static_cast<NodeId>(n);
  return t;
}

}  // namespace

TEST_CASE("two equal-height merges then a root merge") {
  BuildStats st;
  auto t = build_tree(ids(4), unit_rows(4), stream_of({{0, 1}, {2, 3}, {0, 2}}),
                      &st);
  CHECK(st.effective_steps == 3);
  CHECK(st.skipped_pairs == 0);
  REQUIRE(t.nodes.size() == 7);
  CHECK(t.at(4).children == std::vector<NodeId>{0, 1});
  CHECK(t.at(5).children == std::vector<NodeId>{2, 3});
  CHECK(t.root == 6);
  CHECK(t.at(6).children == std::vector<NodeId>{4, 5});
  CHECK(tree_depth(t) == 2);
  validate_tree(t);
}

TEST_CASE("an isolated leaf joins the existing parent") {
  BuildStats st;
  auto t = build_tree(ids(3), unit_rows(3), stream_of({{0, 1}, {0, 2}}), &st);
  CHECK(st.effective_steps == 2);
  REQUIRE(t.nodes.size() == 4);
  CHECK(t.root == 3);
  CHECK(t.at(3).children == std::vector<NodeId>{0, 1, 2});
  CHECK(tree_depth(t) == 1);
  validate_tree(t);
}

TEST_CASE("a shallower fragment collapses into the taller tree's layer") {
  // Merge {0,1}, {2,3}, {4,5}; join the first two into a depth-2 tree; the
  // last fragment then collapses under the top node, giving it 3 children.
  BuildStats st;
  auto t = build_tree(ids(6), unit_rows(6),
                      stream_of({{0, 1}, {2, 3}, {4, 5}, {0, 2}, {4, 0}}), &st);
  CHECK(st.effective_steps == 5);
  CHECK(t.root == 9);
  CHECK(t.at(9).children == std::vector<NodeId>{6, 7, 8});
  CHECK(tree_depth(t) == 2);
  CHECK(node_depth(t, 8) == 1);
  CHECK(node_depth(t, 4) == 2);
  validate_tree(t);
}

TEST_CASE("pairs inside one component are skipped and not counted") {
  BuildStats st;
  auto t = build_tree(ids(3), unit_rows(3),
                      stream_of({{0, 1}, {1, 0}, {0, 2}}), &st);
  CHECK(st.effective_steps == 2);
  CHECK(st.skipped_pairs == 1);
  validate_tree(t);
}

TEST_CASE("effective steps stop consuming once the tree is complete") {
  BuildStats st;
  auto t = build_tree(ids(3), unit_rows(3),
                      stream_of({{0, 1}, {0, 2}, {1, 2}}), &st);
  CHECK(st.effective_steps == 2);
  CHECK(st.pairs_consumed == 2);  // the (1,2) pair is never read
  validate_tree(t);
}

TEST_CASE("an exhausted stream leaves a forest and build_tree reports it") {
  BuildStats st;
  auto forest = build_forest(ids(4), unit_rows(4), stream_of({{0, 1}}), &st);
  CHECK(forest.root == kNoNode);
  auto roots = component_roots(forest);
  CHECK(roots == std::vector<NodeId>{2, 3, 4});
  try {
    build_tree(ids(4), unit_rows(4), stream_of({{0, 1}}));
    FAIL("expected DataError");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("residual") != std::string::npos);
    CHECK(msg.find("2, 3, 4") != std::string::npos);
  }
}

TEST_CASE("connect_residual joins fragments at matching layers") {
  // Fragment A: depth 2 over leaves 0-3 (all near +x); fragment B: depth 1
  // over leaves 4-5 (also +x-ish). The stream only wires each fragment.
  Embeddings m;
  m.dim = 3;
  auto push = [&](float x, float y, float z) {
    std::vector<float> v = {x, y, z};
    l2_normalize(v);
    m.append(v);
  };
  push(1, 0.10f, 0);
  push(1, 0.11f, 0);
  push(1, 0.12f, 0);
  push(1, 0.13f, 0);
  push(1, 0.50f, 0);
  push(1, 0.51f, 0);
  auto forest =
      build_forest(ids(6), m, stream_of({{0, 1}, {2, 3}, {0, 2}, {4, 5}}));
  CHECK(forest.root == kNoNode);
  REQUIRE(component_roots(forest).size() == 2);
  connect_residual(forest);
  CHECK(forest.root != kNoNode);
  validate_tree(forest);
  CHECK(tree_depth(forest) == 2);
  // B's root sits one layer below the root: depth 1.
  const NodeId b_root = forest.at(4).parent;
  CHECK(node_depth(forest, b_root) == 1);
}

TEST_CASE("rebalance splits an oversized root into halves") {
  auto t = star(41);
  rebalance(t, 40);
  validate_tree(t, 40);
  CHECK(tree_depth(t) == 2);
  REQUIRE(t.at(t.root).children.size() == 2);
  const auto& cs = t.at(t.root).children;
  CHECK(t.at(cs[0]).children.size() == 21);
  CHECK(t.at(cs[1]).children.size() == 20);
  CHECK(t.at(cs[0]).stale);
  CHECK(t.at(cs[1]).stale);
}

TEST_CASE("rebalance iterates until no fanout exceeds the cap") {
  auto t = star(81);
  rebalance(t, 40);
  validate_tree(t, 40);
  CHECK(tree_depth(t) == 2);
  std::multiset<std::size_t> fanouts;
  for (NodeId c : t.at(t.root).children) {
    fanouts.insert(t.at(c).children.size());
  }
  CHECK(fanouts == std::multiset<std::size_t>{20, 21, 40});
}

TEST_CASE("rebalance leaves compliant trees alone") {
  auto t = build_tree(ids(4), unit_rows(4), stream_of({{0, 1}, {2, 3}, {0, 2}}));
  const std::size_t nodes_before = t.nodes.size();
  rebalance(t, 40);
  CHECK(t.nodes.size() == nodes_before);
  CHECK(tree_depth(t) == 2);
}

TEST_CASE("rebalance rejects caps below 3") {
  auto t = star(5);
  CHECK_THROWS_AS(rebalance(t, 2), UsageError);
}

TEST_CASE("lca walks to the nearest shared ancestor") {
  auto t = build_tree(ids(4), unit_rows(4), stream_of({{0, 1}, {2, 3}, {0, 2}}));
  CHECK(lca(t, 0, 1) == 4);
  CHECK(lca(t, 0, 3) == 6);
  CHECK(lca(t, 2, 2) == 2);
  CHECK(lca(t, 4, 1) == 4);
}

TEST_CASE("layers enumerate nodes by depth") {
  auto t = build_tree(ids(4), unit_rows(4), stream_of({{0, 1}, {2, 3}, {0, 2}}));
  auto ls = layers(t);
  REQUIRE(ls.size() == 3);
  CHECK(ls[0] == std::vector<NodeId>{6});
  CHECK(ls[1] == std::vector<NodeId>{4, 5});
  CHECK(ls[2] == std::vector<NodeId>{0, 1, 2, 3});
}

TEST_CASE("validate_tree catches corruption") {
  auto t = build_tree(ids(4), unit_rows(4), stream_of({{0, 1}, {2, 3}, {0, 2}}));
  SUBCASE("parent mismatch") {
    t.at(0).parent = 5;
    CHECK_THROWS_AS(validate_tree(t), VerificationError);
  }
  SUBCASE("unequal leaf depth") {
    // Hang an extra leaf off the root: its depth is 1 while others sit at 2.
    TreeNode leaf;
    leaf.id = static_cast<NodeId>(t.nodes.size());
    leaf.is_leaf = true;
    leaf.chunk_id = "c#x";
    leaf.parent = t.root;
    t.nodes.push_back(leaf);
    t.at(t.root).children.push_back(leaf.id);
    t.leaf_count += 1;
    CHECK_THROWS_AS(validate_tree(t), VerificationError);
  }
  SUBCASE("fanout above the cap") {
    CHECK_THROWS_AS(validate_tree(t, 1), VerificationError);
  }
}

TEST_CASE("insert_leaf attaches next to the nearest leaf and marks ancestors") {
  Embeddings m = unit_rows(4);
  auto t = build_tree(ids(4), m, stream_of({{0, 1}, {2, 3}, {0, 2}}));
  for (auto& n : t.nodes) n.stale = false;
  std::vector<float> v(4, 0.0f);
  v[2] = 1.0f;  // identical to leaf 2
  const NodeId nid = insert_leaf(t, "c#new", v);
  CHECK(t.at(nid).parent == t.at(2).parent);
  CHECK(t.leaf_count == 5);
  CHECK(tree_depth(t) == 2);
  CHECK(t.at(5).stale);      // parent of leaf 2
  CHECK(t.at(t.root).stale);
  CHECK_FALSE(t.at(4).stale);  // untouched branch
  validate_tree(t);
}

TEST_CASE("insert_leaf needs an abstract level") {
  AbstractTree t;
  TreeNode leaf;
  leaf.id = 0;
  leaf.is_leaf = true;
  leaf.chunk_id = "only";
  leaf.embedding = {1.0f};
  leaf.has_embedding = true;
  t.nodes.push_back(leaf);
  t.root = 0;
  t.leaf_count = 1;
  CHECK_THROWS_AS(insert_leaf(t, "c#new", {1.0f}), DataError);
}

TEST_CASE("insert_batch grafts a shallower subtree below an anchor") {
  Embeddings m = unit_rows(4);
  auto t = build_tree(ids(4), m, stream_of({{0, 1}, {2, 3}, {0, 2}}));
  Embeddings batch;
  batch.dim = 4;
  std::vector<float> a = {0.9f, 0.1f, 0, 0}, b = {0.9f, 0.12f, 0, 0};
  l2_normalize(a);
  l2_normalize(b);
  batch.append(a);
  batch.append(b);
  auto new_leaves = insert_batch(t, {"n#0", "n#1"}, batch);
  REQUIRE(new_leaves.size() == 2);
  CHECK(t.leaf_count == 6);
  CHECK(tree_depth(t) == 2);  // depth 1 subtree fits one layer down
  validate_tree(t);
  // The height-1 subtree root hangs from a height-2 anchor, i.e. one layer
  // below the top.
  const NodeId sub_root = t.at(new_leaves[0]).parent;
  CHECK(node_depth(t, sub_root) == 1);
  CHECK(t.at(sub_root).parent == t.root);
}

TEST_CASE("insert_batch of matching height adds a new root") {
  Embeddings m = unit_rows(4);
  auto t = build_tree(ids(4), m, stream_of({{0, 1}, {2, 3}, {0, 2}}));
  // Two tight pairs pointing along +x and +z: the batch builds to depth 2
  // (two merges, then a root merge), matching the main tree's height.
  Embeddings batch;
  batch.dim = 4;
  auto push = [&](float x, float y, float z, float w) {
    std::vector<float> v = {x, y, z, w};
    l2_normalize(v);
    batch.append(v);
  };
  push(1.0f, 0.10f, 0.0f, 0.0f);
  push(1.0f, 0.11f, 0.0f, 0.0f);
  push(0.10f, 0.0f, 1.0f, 0.0f);
  push(0.12f, 0.0f, 1.0f, 0.0f);
  auto new_leaves = insert_batch(t, {"m#0", "m#1", "m#2", "m#3"}, batch);
  REQUIRE(new_leaves.size() == 4);
  CHECK(tree_depth(t) == 3);
  CHECK(t.leaf_count == 8);
  validate_tree(t);
}

TEST_CASE("tree serialization round trips byte-identically") {
  Embeddings m = unit_rows(4);
  auto t = build_tree(ids(4), m, stream_of({{0, 1}, {2, 3}, {0, 2}}));
  t.at(4).abstract_text = "first pair summary";
  t.at(4).stale = false;
  t.at(5).abstract_text = "second pair, with \"quotes\"";
  const fs::path dir = fs::temp_directory_path() / "hat_tree_rt";
  fs::create_directories(dir);
  const fs::path j1 = dir / "tree.json";
  save_tree(j1.string(), t);
  AbstractTree back = load_tree(j1.string());
  REQUIRE(back.nodes.size() == t.nodes.size());
  CHECK(back.root == t.root);
  CHECK(back.leaf_count == t.leaf_count);
  for (std::size_t i = 0; i < t.nodes.size(); ++i) {
    CHECK(back.nodes[i].parent == t.nodes[i].parent);
    CHECK(back.nodes[i].children == t.nodes[i].children);
    CHECK(back.nodes[i].is_leaf == t.nodes[i].is_leaf);
    CHECK(back.nodes[i].chunk_id == t.nodes[i].chunk_id);
    CHECK(back.nodes[i].abstract_text == t.nodes[i].abstract_text);
    CHECK(back.nodes[i].stale == t.nodes[i].stale);
    CHECK(back.nodes[i].embedding == t.nodes[i].embedding);
  }
  // Saving the loaded tree reproduces the files byte for byte.
  const fs::path dir2 = dir / "again";
  fs::create_directories(dir2);
  save_tree((dir2 / "tree.json").string(), back);
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
  };
  CHECK(slurp(j1) == slurp(dir2 / "tree.json"));
  CHECK(slurp(dir / "embeddings.psie") == slurp(dir2 / "embeddings.psie"));
  fs::remove_all(dir);
}

TEST_CASE("unknown tree format versions are rejected by name") {
  const fs::path dir = fs::temp_directory_path() / "hat_tree_ver";
  fs::create_directories(dir);
  Embeddings m = unit_rows(3);
  auto t = build_tree(ids(3), m, stream_of({{0, 1}, {0, 2}}));
  save_tree((dir / "tree.json").string(), t);
  // Bump the version field in place.
  std::string text;
  {
    std::ifstream in(dir / "tree.json", std::ios::binary);
    text.assign((std::istreambuf_iterator<char>(in)),
                std::istreambuf_iterator<char>());
  }
  const auto pos = text.find("\"version\": 1");
  REQUIRE(pos != std::string::npos);
  text.replace(pos, 12, "\"version\": 2");
  {
    std::ofstream out(dir / "tree.json", std::ios::binary);
    out << text;
  }
  try {
    load_tree((dir / "tree.json").string());
    FAIL("expected DataError");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("version 2") != std::string::npos);
    CHECK(msg.find("supports 1") != std::string::npos);
  }
  fs::remove_all(dir);
}

TEST_CASE("dot export lists every edge") {
  auto t = build_tree(ids(3), unit_rows(3), stream_of({{0, 1}, {0, 2}}));
  const std::string dot = export_dot(t);
  CHECK(dot.find("digraph") != std::string::npos);
  CHECK(dot.find("n3 -> n0;") != std::string::npos);
  CHECK(dot.find("n3 -> n1;") != std::string::npos);
  CHECK(dot.find("n3 -> n2;") != std::string::npos);
}
