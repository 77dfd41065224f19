#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "hat/rng.hpp"
#include "hat/tree.hpp"

namespace hat {

// Strictly binary hierarchy (every internal node has exactly two children),
// the shape produced by pairwise agglomerative clustering. Leaves carry the
// caller's leaf indices; internal nodes carry none.
struct BinaryTree {
  struct Node {
    int left = -1;
    int right = -1;
    int leaf = -1;  // >= 0 exactly when the node is a leaf
  };
  std::vector<Node> nodes;
  int root = -1;
};

BinaryTree binary_leaf(int leaf_index);

// New root over the two trees (left subtree first). Node ids of `l` are
// preserved; `r`'s are shifted.
BinaryTree binary_join(BinaryTree l, const BinaryTree& r);

// Left-leaning chain: (((l0,l1),l2),l3)... Requires at least one leaf.
BinaryTree left_caterpillar(const std::vector<int>& leaves);

std::size_t binary_leaf_count(const BinaryTree& t);

// Hierarchy cost with unit pairwise distance: every leaf pair contributes the
// leaf count of its lowest common ancestor. Exact in 64-bit integers.
std::int64_t dasgupta_cost(const BinaryTree& t);

struct PairCost {
  std::uint32_t u = 0;  // positions into leaf_ids(t), u < v
  std::uint32_t v = 0;
  double d = 1.0;
  std::uint32_t lca_leaves = 0;
};

struct CostReport {
  std::int64_t total = 0;
  std::vector<std::int64_t> subtree_costs;  // one per child of the root
  std::int64_t cross = 0;                   // pairs whose LCA is the root
  std::vector<PairCost> per_pair;           // filled only on request
};

// Unit-distance cost of a (not necessarily equi-depth) tree held in an
// AbstractTree. subtree_costs + cross always sums to total.
CostReport dasgupta_cost(const AbstractTree& t, bool with_pairs = false);

// Weighted variant; d maps a leaf-position pair (into leaf_ids(t)) to a
// non-negative distance.
using LeafDistance = std::function<double(std::uint32_t, std::uint32_t)>;
double weighted_dasgupta_cost(const AbstractTree& t, const LeafDistance& d);

// Cost increase when an isolated leaf joins a node that already has n_a
// leaf children: n_a choose 2.
std::int64_t collapse_increment_leaf(std::int64_t n_a);

// Cost increase when a subtree with n_prime leaves becomes an extra branch of
// a node whose existing branches hold branch_sizes leaves: n_prime times the
// sum over branch pairs of n_i * n_j.
std::int64_t collapse_increment_abstract(
    std::int64_t n_prime, const std::vector<std::int64_t>& branch_sizes);

// One collapse performed while flattening a tree: a resolved subtree of
// n_prime leaves attached below the taller sibling at its matching layer.
struct PsiCollapse {
  std::int64_t n_prime = 0;
  std::vector<std::int64_t> branch_sizes;  // target's branches before attach
  std::uint32_t height_diff = 0;           // taller height minus shallower
  std::int64_t measured = 0;               // exact cost delta of this step
};

// Flattens an arbitrary hierarchy into an equi-depth multifurcating tree.
// Children are resolved bottom-up; equal-height children merge under one
// parent, and each shallower child's root collapses into the first tallest
// child at height h+1, descending its leftmost spine. Equi-depth inputs pass
// through unchanged (the map is idempotent), the leaf set is preserved, and
// the logged `measured` deltas sum exactly to cost(out) - cost(in). For
// two-child nodes (every node of a binarized input) a height_diff == 1
// collapse measures exactly collapse_increment_abstract of its target.
AbstractTree psi_collapse(const AbstractTree& in,
                          std::vector<PsiCollapse>* log = nullptr);

AbstractTree to_general(const BinaryTree& b);
AbstractTree psi_collapse(const BinaryTree& b,
                          std::vector<PsiCollapse>* log = nullptr);

// Root over one abstract node per entry; branch i holds branch_sizes[i]
// leaves (numbered left to right from 0). Every size must be >= 2 so the
// fanout invariant holds.
AbstractTree star_tree(const std::vector<std::int64_t>& branch_sizes);

// Balance check for uniform two-level trees: n = k*m leaves in k branches of
// m. Moving one leaf between two branches changes the cost by exactly
// 3m - n - 1 < 0, so the balanced tree is never optimal for k >= 3, n >= 3k.
// Also replays both trees from left-leaning binary chains through
// psi_collapse and checks the flattening deltas in closed form. Returns the
// (negative) cost change. Throws VerificationError on any mismatch.
std::int64_t verify_theorem2(std::int64_t k, std::int64_t m);

// Minority-absorption check: branch i is strictly smallest (n_i >= 2) and one
// leaf moves from branch j to branch i. The cost change always equals
// n(n_j - n_i - 1) + (3n_i^2 + n_i - 3n_j^2 + 5n_j - 2)/2, equivalently
// (n_j - n_i - 1)(2n - 3(n_i + n_j) + 2)/2, and the flattening deltas of the
// canonical binary chains track it exactly. Whenever the remaining branches
// hold at least (k-2)*n_j leaves, the change is also non-negative and zero
// exactly for a next-size source (n_j == n_i + 1): growing the minority
// branch never helps there. Returns the cost change; throws
// VerificationError on any mismatch.
std::int64_t verify_theorem3(std::vector<std::int64_t> branch_sizes,
                             std::size_t i, std::size_t j);

// Nested tree description used to generate random hierarchies: a leaf index
// or a list of subtrees.
struct TreeSpec {
  int leaf = -1;
  std::vector<TreeSpec> kids;
};

// Uniformly random hierarchy over the given leaves: each internal node splits
// its leaf set into 2..4 non-empty parts. Singleton input gives a leaf.
TreeSpec random_tree_spec(Rng& rng, const std::vector<int>& leaves);

AbstractTree materialize(const TreeSpec& spec);

// One modularity trial: build a random tree, rebuild the subtree under a
// random internal node with a fresh random shape over the same leaves, and
// check cost(T') == cost(T) - cost(T_a) + cost(T'_a) exactly. Throws
// VerificationError on mismatch.
void verify_lemma1_trial(Rng& rng, std::size_t leaf_count);

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

struct MixtureComponent {
  std::size_t count = 0;
  Point2 center;
  double stddev = 1.0;
};

struct KmeansDemoConfig {
  std::vector<MixtureComponent> mixture;
  std::uint64_t seed = 42;
  std::size_t max_iters = 50;
};

// One Lloyd snapshot. Centroids are always the means of the recorded
// assignment, so the within-cluster objective admits the pairwise form
// objective == pair_sum/(2n) - (1/n) * sum_{i<j} n_i n_j |mu_i - mu_j|^2.
struct ClusterState {
  std::vector<Point2> centroids;
  std::vector<std::uint32_t> assignments;  // point -> cluster
  double objective = 0.0;
};

struct KmeansDemoResult {
  std::vector<Point2> points;
  std::vector<std::uint32_t> labels;  // generating component per point
  std::vector<ClusterState> steps;    // steps[0] = class-center start
  std::vector<std::size_t> final_sizes;
};

double kmeans_objective(const std::vector<Point2>& points,
                        const std::vector<std::uint32_t>& assignments,
                        const std::vector<Point2>& centroids);

// Right-hand side of the pairwise decomposition for the means of the given
// assignment: pair_sum/(2n) - (1/n) * sum_{i<j} n_i n_j |mu_i - mu_j|^2,
// where pair_sum runs over all ordered point pairs of the whole dataset.
double uniform_effect_rhs(const std::vector<Point2>& points,
                          const std::vector<std::uint32_t>& assignments,
                          std::size_t k);

// Samples the Gaussian mixture, starts Lloyd's algorithm from the per-class
// sample means (step 0 assigns by generating class), and iterates to a fixed
// point or max_iters. Empty clusters are re-seeded with the point farthest
// from its centroid. Each recorded step satisfies the pairwise decomposition
// within 1e-6 relative and the objective never increases; violations throw
// VerificationError. Deterministic for a fixed config.
KmeansDemoResult kmeans_demo(const KmeansDemoConfig& cfg);

}  // namespace hat
