#include "hat/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <utility>

#include "hat/errors.hpp"

namespace hat {

namespace {

std::int64_t choose2(std::int64_t n) { return n < 2 ? 0 : n * (n - 1) / 2; }
std::int64_t choose3(std::int64_t n) {
  return n < 3 ? 0 : n * (n - 1) * (n - 2) / 6;
}

NodeId add_leaf_node(AbstractTree& t, std::string chunk_id) {
  const NodeId id = static_cast<NodeId>(t.nodes.size());
  TreeNode n;
  n.id = id;
  n.is_leaf = true;
  n.chunk_id = std::move(chunk_id);
  t.nodes.push_back(std::move(n));
  ++t.leaf_count;
  return id;
}

NodeId add_parent_node(AbstractTree& t, const std::vector<NodeId>& kids) {
  const NodeId id = static_cast<NodeId>(t.nodes.size());
  TreeNode n;
  n.id = id;
  n.children = kids;
  t.nodes.push_back(std::move(n));
  for (NodeId c : kids) t.at(c).parent = id;
  return id;
}

// Returns the subtree's leaf count; every internal node below adds
// (pairs first meeting there) * (its leaf count) to acc.
std::int64_t cost_walk(const AbstractTree& t, NodeId id, std::int64_t& acc) {
  const TreeNode& nd = t.at(id);
  if (nd.children.empty()) return 1;
  std::int64_t total = 0;
  std::int64_t sq = 0;
  for (NodeId c : nd.children) {
    const std::int64_t s = cost_walk(t, c, acc);
    total += s;
    sq += s * s;
  }
  acc += (total * total - sq) / 2 * total;
  return total;
}

std::int64_t subtree_cost(const AbstractTree& t, NodeId id) {
  std::int64_t acc = 0;
  cost_walk(t, id, acc);
  return acc;
}

std::int64_t subtree_size(const AbstractTree& t, NodeId id) {
  const TreeNode& nd = t.at(id);
  if (nd.children.empty()) return 1;
  std::int64_t total = 0;
  for (NodeId c : nd.children) total += subtree_size(t, c);
  return total;
}

std::int64_t binary_cost_walk(const BinaryTree& t, int id, std::int64_t& acc) {
  const BinaryTree::Node& nd = t.nodes[static_cast<std::size_t>(id)];
  if (nd.leaf >= 0) return 1;
  const std::int64_t a = binary_cost_walk(t, nd.left, acc);
  const std::int64_t b = binary_cost_walk(t, nd.right, acc);
  acc += a * b * (a + b);
  return a + b;
}

}  // namespace

BinaryTree binary_leaf(int leaf_index) {
  if (leaf_index < 0) throw UsageError("leaf index must be non-negative");
  BinaryTree t;
  t.nodes.push_back(BinaryTree::Node{-1, -1, leaf_index});
  t.root = 0;
  return t;
}

BinaryTree binary_join(BinaryTree l, const BinaryTree& r) {
  if (l.root < 0 || r.root < 0)
    throw UsageError("binary_join needs two non-empty trees");
  const int shift = static_cast<int>(l.nodes.size());
  for (const BinaryTree::Node& n : r.nodes) {
    BinaryTree::Node m = n;
    if (m.left >= 0) m.left += shift;
    if (m.right >= 0) m.right += shift;
    l.nodes.push_back(m);
  }
  l.nodes.push_back(BinaryTree::Node{l.root, r.root + shift, -1});
  l.root = static_cast<int>(l.nodes.size()) - 1;
  return l;
}

BinaryTree left_caterpillar(const std::vector<int>& leaves) {
  if (leaves.empty()) throw UsageError("left_caterpillar needs leaves");
  BinaryTree t = binary_leaf(leaves[0]);
  for (std::size_t i = 1; i < leaves.size(); ++i)
    t = binary_join(std::move(t), binary_leaf(leaves[i]));
  return t;
}

std::size_t binary_leaf_count(const BinaryTree& t) {
  std::size_t n = 0;
  for (const BinaryTree::Node& nd : t.nodes)
    if (nd.leaf >= 0) ++n;
  return n;
}

std::int64_t dasgupta_cost(const BinaryTree& t) {
  if (t.root < 0) throw UsageError("cost of an empty tree");
  std::int64_t acc = 0;
  binary_cost_walk(t, t.root, acc);
  return acc;
}

CostReport dasgupta_cost(const AbstractTree& t, bool with_pairs) {
  if (t.root == kNoNode) throw UsageError("cost requires a rooted tree");
  CostReport r;
  const TreeNode& root = t.at(t.root);
  std::int64_t n = 0;
  std::int64_t sq = 0;
  for (NodeId c : root.children) {
    std::int64_t acc = 0;
    const std::int64_t s = cost_walk(t, c, acc);
    r.subtree_costs.push_back(acc);
    n += s;
    sq += s * s;
  }
  r.cross = root.children.empty() ? 0 : (n * n - sq) / 2 * n;
  r.total = r.cross;
  for (std::int64_t c : r.subtree_costs) r.total += c;
  if (with_pairs) {
    const std::vector<NodeId> leaves = leaf_ids(t);
    for (std::uint32_t u = 0; u < leaves.size(); ++u) {
      for (std::uint32_t v = u + 1; v < leaves.size(); ++v) {
        const NodeId a = lca(t, leaves[u], leaves[v]);
        PairCost pc;
        pc.u = u;
        pc.v = v;
        pc.d = 1.0;
        pc.lca_leaves =
            static_cast<std::uint32_t>(subtree_leaves(t, a).size());
        r.per_pair.push_back(pc);
      }
    }
  }
  return r;
}

double weighted_dasgupta_cost(const AbstractTree& t, const LeafDistance& d) {
  if (t.root == kNoNode) throw UsageError("cost requires a rooted tree");
  if (!d) throw UsageError("distance function required");
  const std::vector<NodeId> leaves = leaf_ids(t);
  double total = 0.0;
  for (std::uint32_t u = 0; u < leaves.size(); ++u) {
    for (std::uint32_t v = u + 1; v < leaves.size(); ++v) {
      const NodeId a = lca(t, leaves[u], leaves[v]);
      total += d(u, v) * static_cast<double>(subtree_leaves(t, a).size());
    }
  }
  return total;
}

std::int64_t collapse_increment_leaf(std::int64_t n_a) {
  if (n_a < 1) throw UsageError("target subtree needs at least one leaf");
  return choose2(n_a);
}

std::int64_t collapse_increment_abstract(
    std::int64_t n_prime, const std::vector<std::int64_t>& branch_sizes) {
  if (n_prime < 1) throw UsageError("collapsed subtree needs at least one leaf");
  if (branch_sizes.size() < 2) throw UsageError("target needs >= 2 branches");
  std::int64_t total = 0;
  std::int64_t sq = 0;
  for (std::int64_t s : branch_sizes) {
    if (s < 1) throw UsageError("branch sizes must be positive");
    total += s;
    sq += s * s;
  }
  return n_prime * ((total * total - sq) / 2);
}

namespace {

struct PsiBuilder {
  const AbstractTree& in;
  AbstractTree out;
  std::vector<PsiCollapse>* log = nullptr;

  // Attaches a resolved shallower subtree below `head` at its matching
  // layer. `apex` is the leaf total of the input node being resolved: until
  // this collapse, sub's leaves met head's at a node holding all of them.
  void collapse_into(NodeId head, std::uint32_t head_h, NodeId sub,
                     std::uint32_t sub_h, std::int64_t apex) {
    NodeId target = head;
    for (std::uint32_t h = head_h; h > sub_h + 1; --h)
      target = out.at(target).children.front();
    PsiCollapse entry;
    entry.n_prime = subtree_size(out, sub);
    entry.height_diff = head_h - sub_h;
    for (NodeId b : out.at(target).children)
      entry.branch_sizes.push_back(subtree_size(out, b));
    const std::int64_t head_leaves = subtree_size(out, head);
    const std::int64_t head_cost = subtree_cost(out, head);
    const std::int64_t sub_cost = subtree_cost(out, sub);
    out.at(target).children.push_back(sub);
    out.at(sub).parent = target;
    entry.measured = subtree_cost(out, head) - head_cost - sub_cost -
                     head_leaves * entry.n_prime * apex;
    if (log) log->push_back(std::move(entry));
  }

  std::pair<NodeId, std::uint32_t> resolve(NodeId vin) {
    const TreeNode& v = in.at(vin);
    if (v.children.empty()) return {add_leaf_node(out, v.chunk_id), 0};
    std::vector<std::pair<NodeId, std::uint32_t>> kids;
    kids.reserve(v.children.size());
    for (NodeId c : v.children) kids.push_back(resolve(c));
    if (kids.size() == 1) return kids[0];
    std::uint32_t hmax = 0;
    for (const auto& k : kids) hmax = std::max(hmax, k.second);
    std::int64_t apex = 0;
    for (const auto& k : kids) apex += subtree_size(out, k.first);
    std::vector<NodeId> branches;
    for (const auto& k : kids)
      if (k.second == hmax) branches.push_back(k.first);
    const NodeId head = branches.front();
    for (const auto& k : kids)
      if (k.second < hmax) collapse_into(head, hmax, k.first, k.second, apex);
    if (branches.size() == 1) return {head, hmax};
    return {add_parent_node(out, branches), hmax + 1};
  }
};

}  // namespace

AbstractTree psi_collapse(const AbstractTree& in,
                          std::vector<PsiCollapse>* log) {
  if (in.root == kNoNode) throw UsageError("flattening requires a rooted tree");
  PsiBuilder b{in, AbstractTree{}, log};
  const auto [root, height] = b.resolve(in.root);
  (void)height;
  b.out.root = root;
  return std::move(b.out);
}

namespace {

NodeId general_from(const BinaryTree& b, int id, AbstractTree& out) {
  const BinaryTree::Node& nd = b.nodes[static_cast<std::size_t>(id)];
  const bool has_kids = nd.left >= 0 || nd.right >= 0;
  if (nd.leaf >= 0) {
    if (has_kids) throw UsageError("leaf node with children");
    return add_leaf_node(out, std::to_string(nd.leaf));
  }
  if (nd.left < 0 || nd.right < 0)
    throw UsageError("internal node needs exactly two children");
  const NodeId l = general_from(b, nd.left, out);
  const NodeId r = general_from(b, nd.right, out);
  return add_parent_node(out, {l, r});
}

}  // namespace

AbstractTree to_general(const BinaryTree& b) {
  if (b.root < 0) throw UsageError("empty binary tree");
  AbstractTree out;
  out.root = general_from(b, b.root, out);
  return out;
}

AbstractTree psi_collapse(const BinaryTree& b, std::vector<PsiCollapse>* log) {
  const AbstractTree g = to_general(b);
  return psi_collapse(g, log);
}

AbstractTree star_tree(const std::vector<std::int64_t>& branch_sizes) {
  if (branch_sizes.size() < 2) throw UsageError("star tree needs >= 2 branches");
  AbstractTree t;
  std::vector<NodeId> branches;
  int next = 0;
  for (std::int64_t s : branch_sizes) {
    if (s < 2) throw UsageError("every branch needs at least 2 leaves");
    std::vector<NodeId> leaves;
    for (std::int64_t i = 0; i < s; ++i)
      leaves.push_back(add_leaf_node(t, std::to_string(next++)));
    branches.push_back(add_parent_node(t, leaves));
  }
  t.root = add_parent_node(t, branches);
  return t;
}

namespace {

// Left-leaning chain over per-branch left-leaning chains, branches in the
// given order, leaves numbered left to right.
BinaryTree chain_realization(const std::vector<std::int64_t>& sizes) {
  BinaryTree top;
  bool first = true;
  int next = 0;
  for (std::int64_t s : sizes) {
    std::vector<int> lv(static_cast<std::size_t>(s));
    std::iota(lv.begin(), lv.end(), next);
    next += static_cast<int>(s);
    BinaryTree branch = left_caterpillar(lv);
    top = first ? std::move(branch) : binary_join(std::move(top), branch);
    first = false;
  }
  return top;
}

// (flattening delta, flattened cost) for the chain's canonical resolution.
std::pair<std::int64_t, std::int64_t> flatten_delta(const BinaryTree& b) {
  const std::int64_t flat = dasgupta_cost(psi_collapse(b), false).total;
  return {flat - dasgupta_cost(b), flat};
}

}  // namespace

std::int64_t verify_theorem2(std::int64_t k, std::int64_t m) {
  if (k < 3) throw UsageError("uniform-balance check needs k >= 3");
  if (m < 3) throw UsageError("uniform-balance check needs branch size >= 3");
  const std::int64_t n = k * m;
  std::vector<std::int64_t> uniform(static_cast<std::size_t>(k), m);
  std::vector<std::int64_t> moved = uniform;
  moved[0] = m + 1;
  moved[1] = m - 1;
  const std::int64_t c0 = dasgupta_cost(star_tree(uniform), false).total;
  const std::int64_t c1 = dasgupta_cost(star_tree(moved), false).total;
  const std::int64_t diff = c1 - c0;
  if (diff != 3 * m - n - 1)
    throw VerificationError("uniform-tree cost change " + std::to_string(diff) +
                            " != 3m-n-1 for k=" + std::to_string(k) +
                            " m=" + std::to_string(m));
  if (diff >= 0)
    throw VerificationError("moving a leaf off the uniform tree must lower cost");

  const auto [d0, f0] = flatten_delta(chain_realization(uniform));
  if (f0 != c0)
    throw VerificationError("flattened uniform chain cost mismatch");
  if (d0 != k * choose3(m) + choose3(k) * m * m * m)
    throw VerificationError("uniform flattening delta off its closed form");
  std::vector<std::int64_t> moved_order(static_cast<std::size_t>(k - 2), m);
  moved_order.push_back(m - 1);
  moved_order.push_back(m + 1);
  const auto [d1, f1] = flatten_delta(chain_realization(moved_order));
  if (f1 != c1) throw VerificationError("flattened moved chain cost mismatch");
  const std::int64_t closed1 =
      (k - 2) * choose3(m) + choose3(m - 1) + choose3(m + 1) +
      choose3(k - 2) * m * m * m + choose2(k - 2) * (m - 1) * m * m +
      (m + 1) * (choose2(k - 2) * m * m + (k - 2) * m * (m - 1));
  if (d1 != closed1)
    throw VerificationError("moved flattening delta off its closed form");
  if (d1 - d0 != diff)
    throw VerificationError("flattening deltas do not track the cost change");
  return diff;
}

std::int64_t verify_theorem3(std::vector<std::int64_t> branch_sizes,
                             std::size_t i, std::size_t j) {
  const std::size_t k = branch_sizes.size();
  if (k < 3) throw UsageError("minority check needs at least 3 branches");
  if (i >= k || j >= k || i == j)
    throw UsageError("branch indices must be distinct and in range");
  const std::int64_t ni = branch_sizes[i];
  const std::int64_t nj = branch_sizes[j];
  if (ni < 2) throw UsageError("minor branch needs at least 2 leaves");
  std::int64_t n = 0;
  for (std::size_t o = 0; o < k; ++o) {
    if (o != i && branch_sizes[o] <= ni)
      throw UsageError("minor branch must be strictly smallest");
    n += branch_sizes[o];
  }
  std::vector<std::int64_t> moved = branch_sizes;
  moved[i] = ni + 1;
  moved[j] = nj - 1;
  const std::int64_t c0 = dasgupta_cost(star_tree(branch_sizes), false).total;
  const std::int64_t c1 = dasgupta_cost(star_tree(moved), false).total;
  const std::int64_t diff = c1 - c0;

  // Two algebraically equivalent closed forms; both must match the
  // constructed trees exactly (the factored one doubled to stay integral).
  const std::int64_t num = 3 * ni * ni + ni - 3 * nj * nj + 5 * nj - 2;
  if (num % 2 != 0)
    throw VerificationError("closed-form numerator must be even");
  if (diff != n * (nj - ni - 1) + num / 2)
    throw VerificationError("cost change " + std::to_string(diff) +
                            " off the closed form");
  if (2 * diff != (nj - ni - 1) * (2 * n - 3 * (ni + nj) + 2))
    throw VerificationError("cost change off the factored closed form");

  // Canonical chains: unchanged branches first, then minor, then source.
  std::vector<std::int64_t> order0;
  for (std::size_t o = 0; o < k; ++o)
    if (o != i && o != j) order0.push_back(branch_sizes[o]);
  std::vector<std::int64_t> order1 = order0;
  order0.push_back(ni);
  order0.push_back(nj);
  order1.push_back(ni + 1);
  order1.push_back(nj - 1);
  const auto [d0, f0] = flatten_delta(chain_realization(order0));
  const auto [d1, f1] = flatten_delta(chain_realization(order1));
  if (f0 != c0 || f1 != c1)
    throw VerificationError("flattened chain cost mismatch");
  if (d1 - d0 != diff)
    throw VerificationError("flattening deltas do not track the cost change");

  if (nj == ni + 1 && diff != 0)
    throw VerificationError("next-size move must cost nothing");
  // Sign guarantee: covered whenever the remaining branches hold at least
  // (k-2)*n_j leaves (in particular when the source is the smallest major
  // branch). Outside that range the change can be negative.
  if (n - ni - nj >= static_cast<std::int64_t>(k - 2) * nj) {
    if (diff < 0)
      throw VerificationError("covered move must not lower the cost");
    if ((diff == 0) != (nj == ni + 1))
      throw VerificationError("zero cost change must pin a next-size move");
  }
  return diff;
}

TreeSpec random_tree_spec(Rng& rng, const std::vector<int>& leaves) {
  if (leaves.empty()) throw UsageError("tree spec needs leaves");
  TreeSpec s;
  if (leaves.size() == 1) {
    s.leaf = leaves[0];
    return s;
  }
  const std::size_t parts = static_cast<std::size_t>(
      2 + rng.below(std::min<std::uint64_t>(3, leaves.size() - 1)));
  std::vector<int> pool = leaves;
  for (std::size_t a = pool.size(); a > 1; --a)
    std::swap(pool[a - 1], pool[rng.below(a)]);
  std::vector<std::vector<int>> groups(parts);
  for (std::size_t p = 0; p < parts; ++p) groups[p].push_back(pool[p]);
  for (std::size_t x = parts; x < pool.size(); ++x)
    groups[rng.below(parts)].push_back(pool[x]);
  for (const std::vector<int>& g : groups)
    s.kids.push_back(random_tree_spec(rng, g));
  return s;
}

namespace {

NodeId materialize_node(const TreeSpec& spec, AbstractTree& out) {
  if (spec.kids.empty()) {
    if (spec.leaf < 0) throw UsageError("leaf spec needs an index");
    return add_leaf_node(out, std::to_string(spec.leaf));
  }
  std::vector<NodeId> kids;
  kids.reserve(spec.kids.size());
  for (const TreeSpec& k : spec.kids)
    kids.push_back(materialize_node(k, out));
  return add_parent_node(out, kids);
}

void collect_internal(TreeSpec& s, std::vector<TreeSpec*>& out) {
  if (s.kids.empty()) return;
  out.push_back(&s);
  for (TreeSpec& k : s.kids) collect_internal(k, out);
}

void collect_leaves(const TreeSpec& s, std::vector<int>& out) {
  if (s.kids.empty()) {
    out.push_back(s.leaf);
    return;
  }
  for (const TreeSpec& k : s.kids) collect_leaves(k, out);
}

}  // namespace

AbstractTree materialize(const TreeSpec& spec) {
  AbstractTree t;
  t.root = materialize_node(spec, t);
  return t;
}

void verify_lemma1_trial(Rng& rng, std::size_t leaf_count) {
  if (leaf_count < 2) throw UsageError("modularity trial needs >= 2 leaves");
  std::vector<int> leaves(leaf_count);
  std::iota(leaves.begin(), leaves.end(), 0);
  TreeSpec spec = random_tree_spec(rng, leaves);
  std::vector<TreeSpec*> internal;
  collect_internal(spec, internal);
  TreeSpec* a = internal[rng.below(internal.size())];
  std::vector<int> sub_leaves;
  collect_leaves(*a, sub_leaves);
  const std::int64_t c_t = dasgupta_cost(materialize(spec), false).total;
  const std::int64_t c_a = dasgupta_cost(materialize(*a), false).total;
  TreeSpec replacement = random_tree_spec(rng, sub_leaves);
  const std::int64_t c_a2 = dasgupta_cost(materialize(replacement), false).total;
  *a = std::move(replacement);
  const std::int64_t c_t2 = dasgupta_cost(materialize(spec), false).total;
  if (c_t2 != c_t - c_a + c_a2)
    throw VerificationError("subtree replacement broke the cost decomposition");
}

namespace {

double dist2(const Point2& a, const Point2& b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  return dx * dx + dy * dy;
}

std::vector<Point2> assignment_means(const std::vector<Point2>& points,
                                     const std::vector<std::uint32_t>& assign,
                                     std::size_t k) {
  std::vector<Point2> mu(k, Point2{});
  std::vector<std::size_t> cnt(k, 0);
  for (std::size_t p = 0; p < points.size(); ++p) {
    const std::uint32_t c = assign[p];
    mu[c].x += points[p].x;
    mu[c].y += points[p].y;
    ++cnt[c];
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (cnt[c] == 0) continue;
    mu[c].x /= static_cast<double>(cnt[c]);
    mu[c].y /= static_cast<double>(cnt[c]);
  }
  return mu;
}

}  // namespace

double kmeans_objective(const std::vector<Point2>& points,
                        const std::vector<std::uint32_t>& assignments,
                        const std::vector<Point2>& centroids) {
  if (points.size() != assignments.size())
    throw UsageError("one assignment per point");
  double obj = 0.0;
  for (std::size_t p = 0; p < points.size(); ++p) {
    if (assignments[p] >= centroids.size())
      throw UsageError("assignment outside the centroid list");
    obj += dist2(points[p], centroids[assignments[p]]);
  }
  return obj;
}

double uniform_effect_rhs(const std::vector<Point2>& points,
                          const std::vector<std::uint32_t>& assignments,
                          std::size_t k) {
  if (points.empty()) throw UsageError("pairwise form needs points");
  if (points.size() != assignments.size())
    throw UsageError("one assignment per point");
  const double n = static_cast<double>(points.size());
  double pair_sum = 0.0;  // both orders of every pair
  for (std::size_t a = 0; a < points.size(); ++a)
    for (std::size_t b = a + 1; b < points.size(); ++b)
      pair_sum += 2.0 * dist2(points[a], points[b]);
  std::vector<std::size_t> cnt(k, 0);
  for (std::uint32_t c : assignments) {
    if (c >= k) throw UsageError("assignment outside the cluster range");
    ++cnt[c];
  }
  const std::vector<Point2> mu = assignment_means(points, assignments, k);
  double between = 0.0;
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = a + 1; b < k; ++b)
      between += static_cast<double>(cnt[a]) * static_cast<double>(cnt[b]) *
                 dist2(mu[a], mu[b]);
  return pair_sum / (2.0 * n) - between / n;
}

KmeansDemoResult kmeans_demo(const KmeansDemoConfig& cfg) {
  const std::size_t k = cfg.mixture.size();
  if (k < 2) throw UsageError("mixture needs at least 2 components");
  KmeansDemoResult r;
  Rng rng(cfg.seed);
  for (std::size_t ci = 0; ci < k; ++ci) {
    const MixtureComponent& comp = cfg.mixture[ci];
    if (comp.count == 0) throw UsageError("mixture component with no points");
    for (std::size_t p = 0; p < comp.count; ++p) {
      r.points.push_back(Point2{comp.center.x + comp.stddev * rng.gaussian(),
                                comp.center.y + comp.stddev * rng.gaussian()});
      r.labels.push_back(static_cast<std::uint32_t>(ci));
    }
  }
  const std::size_t n = r.points.size();
  if (n < k) throw UsageError("fewer points than clusters");

  const auto snapshot = [&](std::vector<std::uint32_t> assign) {
    ClusterState st;
    st.centroids = assignment_means(r.points, assign, k);
    st.assignments = std::move(assign);
    st.objective = kmeans_objective(r.points, st.assignments, st.centroids);
    const double rhs = uniform_effect_rhs(r.points, st.assignments, k);
    if (std::fabs(st.objective - rhs) >
        1e-6 * std::max(1.0, std::fabs(st.objective)))
      throw VerificationError(
          "pairwise decomposition does not match the objective");
    return st;
  };

  r.steps.push_back(snapshot(r.labels));
  for (std::size_t iter = 0; iter < cfg.max_iters; ++iter) {
    const ClusterState& prev = r.steps.back();
    std::vector<std::uint32_t> assign(n);
    std::vector<std::size_t> cnt(k, 0);
    for (std::size_t p = 0; p < n; ++p) {
      std::uint32_t best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (std::uint32_t c = 0; c < k; ++c) {
        const double d = dist2(r.points[p], prev.centroids[c]);
        if (d < bd) {  // ties keep the lower cluster index
          bd = d;
          best = c;
        }
      }
      assign[p] = best;
      ++cnt[best];
    }
    // Re-seed each empty cluster with the point farthest from its centroid.
    for (std::uint32_t empty = 0; empty < k; ++empty) {
      if (cnt[empty] != 0) continue;
      std::size_t donor = n;
      double far = -1.0;
      for (std::size_t p = 0; p < n; ++p) {
        if (cnt[assign[p]] < 2) continue;
        const double d = dist2(r.points[p], prev.centroids[assign[p]]);
        if (d > far) {
          far = d;
          donor = p;
        }
      }
      if (donor == n) break;
      --cnt[assign[donor]];
      assign[donor] = empty;
      ++cnt[empty];
    }
    ClusterState st = snapshot(std::move(assign));
    if (st.objective >
        r.steps.back().objective +
            1e-9 * std::max(1.0, std::fabs(r.steps.back().objective)))
      throw VerificationError("objective increased across an iteration");
    if (st.assignments == r.steps.back().assignments) break;
    r.steps.push_back(std::move(st));
  }

  r.final_sizes.assign(k, 0);
  for (std::uint32_t c : r.steps.back().assignments) ++r.final_sizes[c];
  return r;
}

}  // namespace hat
