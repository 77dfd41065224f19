#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "hat/embed.hpp"
#include "hat/pairs.hpp"

namespace hat {

using NodeId = std::uint32_t;
inline constexpr NodeId kNoNode = std::numeric_limits<NodeId>::max();

struct TreeNode {
  NodeId id = 0;
  NodeId parent = kNoNode;
  std::vector<NodeId> children;  // empty for leaves
  bool is_leaf = false;
  std::string chunk_id;       // leaves only
  std::string abstract_text;  // abstract nodes, filled by abstraction
  bool stale = false;         // abstract text needs (re)generation
  bool has_embedding = false;
  std::vector<float> embedding;  // unit norm when has_embedding
};

// Multifurcating equi-depth tree (or forest mid-construction). Node ids are
// stable array indices; nodes are never removed, only added.
struct AbstractTree {
  std::vector<TreeNode> nodes;
  NodeId root = kNoNode;
  std::uint32_t leaf_count = 0;

  const TreeNode& at(NodeId id) const { return nodes[id]; }
  TreeNode& at(NodeId id) { return nodes[id]; }
};

struct BuildStats {
  std::size_t effective_steps = 0;  // stream steps that changed the forest
  std::size_t skipped_pairs = 0;    // same-component pairs ignored
  std::size_t pairs_consumed = 0;   // stream entries read in total
};

// Consumes the descending-similarity stream over n = chunk_ids.size() leaves.
// Each effective step merges two components (new shared parent when heights
// match) or collapses the shallower component into the taller one at its
// matching layer; pairs inside one component are skipped and do not count.
// Exactly n-1 effective steps produce a single root. If the stream runs out
// first, the result is a forest: `root` stays unset and component_roots()
// lists the fragments (connect_residual finishes the job).
AbstractTree build_forest(const std::vector<std::string>& chunk_ids,
                          const Embeddings& leaf_vecs,
                          const std::vector<SimilarPair>& stream,
                          BuildStats* stats = nullptr);

// build_forest that demands completion: throws DataError naming the residual
// component roots if the stream exhausts early.
AbstractTree build_tree(const std::vector<std::string>& chunk_ids,
                        const Embeddings& leaf_vecs,
                        const std::vector<SimilarPair>& stream,
                        BuildStats* stats = nullptr);

// Parentless nodes in ascending id order (singular root for complete trees).
std::vector<NodeId> component_roots(const AbstractTree& t);

// Joins residual components pairwise in descending order of centroid cosine
// similarity (root-merge for equal heights, layer-matched collapse
// otherwise) until a single root remains. Preserves equal leaf depth.
void connect_residual(AbstractTree& t);

// Splits abstract nodes with more than max_children children into halves
// (sizes ceil(m/2) and floor(m/2)), bottom-up until no node overflows. A
// splitting root gains a new root above it, increasing depth by one. Split
// nodes are marked stale.
void rebalance(AbstractTree& t, std::size_t max_children);

// Distance from the root to every leaf (0 for a single-leaf tree).
std::uint32_t tree_depth(const AbstractTree& t);

std::uint32_t node_depth(const AbstractTree& t, NodeId id);

// Height above the leaf layer: leaves are 0; equal-depth leaves make this
// well defined for every node.
std::uint32_t node_height(const AbstractTree& t, NodeId id);

NodeId lca(const AbstractTree& t, NodeId a, NodeId b);

std::vector<NodeId> leaf_ids(const AbstractTree& t);

// layers()[d] = node ids at depth d, each layer ordered left to right by the
// parent layer's child order.
std::vector<std::vector<NodeId>> layers(const AbstractTree& t);

std::vector<NodeId> subtree_leaves(const AbstractTree& t, NodeId id);

// Full structural check: single root, parent/child consistency, acyclicity,
// equal leaf depth, abstract fanout >= 2 (and <= max_children when given).
// Throws VerificationError with a description of the first violation.
void validate_tree(const AbstractTree& t, std::size_t max_children = 0);

// Attaches one new leaf as a sibling of its nearest existing leaf (by cosine
// against `vec`); every ancestor of the insertion point is marked stale.
// Returns the new node id. The tree must have at least one abstract node.
NodeId insert_leaf(AbstractTree& t, const std::string& chunk_id,
                   const std::vector<float>& vec);

// Builds a subtree over the batch with an exact pair stream, then joins it
// to the tree: root-merge when heights match (depth grows by one), otherwise
// the shallower tree's root collapses below an anchor in the taller one
// chosen by centroid cosine at the matching layer. Returns the new leaf ids.
std::vector<NodeId> insert_batch(AbstractTree& t,
                                 const std::vector<std::string>& chunk_ids,
                                 const Embeddings& vecs);

}  // namespace hat
