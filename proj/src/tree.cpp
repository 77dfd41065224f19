#include "hat/tree.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>

#include "hat/errors.hpp"

namespace hat {

namespace {

struct UnionFind {
  std::vector<std::uint32_t> p;
  explicit UnionFind(std::size_t n) : p(n) {
    std::iota(p.begin(), p.end(), 0u);
  }
  std::uint32_t find(std::uint32_t x) {
    std::uint32_t r = x;
    while (p[r] != r) r = p[r];
    while (p[x] != r) {
      const std::uint32_t nx = p[x];
      p[x] = r;
      x = nx;
    }
    return r;
  }
  // Merges b's class into a's; a stays representative.
  std::uint32_t unite(std::uint32_t a, std::uint32_t b) {
    a = find(a);
    b = find(b);
    p[b] = a;
    return a;
  }
};

NodeId new_abstract(AbstractTree& t) {
  TreeNode n;
  n.id = static_cast<NodeId>(t.nodes.size());
  n.is_leaf = false;
  n.stale = true;
  t.nodes.push_back(std::move(n));
  return t.nodes.back().id;
}

void attach(AbstractTree& t, NodeId parent, NodeId child) {
  t.at(parent).children.push_back(child);
  t.at(child).parent = parent;
}

NodeId ascend(const AbstractTree& t, NodeId node, std::uint32_t steps) {
  while (steps-- > 0) node = t.at(node).parent;
  return node;
}

std::vector<float> subtree_centroid(const AbstractTree& t, NodeId id) {
  std::vector<NodeId> ls = subtree_leaves(t, id);
  std::vector<float> c(t.at(ls.front()).embedding.size(), 0.0f);
  for (NodeId l : ls) {
    const auto& v = t.at(l).embedding;
    for (std::size_t k = 0; k < c.size(); ++k) c[k] += v[k];
  }
  double sq = 0.0;
  for (float x : c) sq += static_cast<double>(x) * x;
  if (sq == 0.0) return t.at(ls.front()).embedding;  // degenerate cancellation
  const float inv = static_cast<float>(1.0 / std::sqrt(sq));
  for (float& x : c) x *= inv;
  return c;
}

}  // namespace

AbstractTree build_forest(const std::vector<std::string>& chunk_ids,
                          const Embeddings& leaf_vecs,
                          const std::vector<SimilarPair>& stream,
                          BuildStats* stats) {
  const std::size_t n = chunk_ids.size();
  if (n == 0) throw DataError("cannot build a tree over zero chunks");
  if (leaf_vecs.count() != n) {
    throw DataError("leaf embedding count " + std::to_string(leaf_vecs.count()) +
                    " does not match chunk count " + std::to_string(n));
  }
  AbstractTree t;
  t.leaf_count = static_cast<std::uint32_t>(n);
  t.nodes.reserve(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    TreeNode leaf;
    leaf.id = static_cast<NodeId>(i);
    leaf.is_leaf = true;
    leaf.chunk_id = chunk_ids[i];
    auto row = leaf_vecs.at(i);
    leaf.embedding.assign(row.begin(), row.end());
    leaf.has_embedding = true;
    t.nodes.push_back(std::move(leaf));
  }

  UnionFind uf(n);
  std::vector<NodeId> comp_root(n);
  std::iota(comp_root.begin(), comp_root.end(), 0u);
  std::vector<std::uint32_t> comp_height(n, 0);
  std::size_t components = n;
  BuildStats st;

  for (const SimilarPair& pr : stream) {
    if (components == 1) break;
    ++st.pairs_consumed;
    const std::uint32_t ru = uf.find(pr.i);
    const std::uint32_t rv = uf.find(pr.j);
    if (ru == rv) {
      ++st.skipped_pairs;
      continue;
    }
    const std::uint32_t hu = comp_height[ru];
    const std::uint32_t hv = comp_height[rv];
    const NodeId root_u = comp_root[ru];
    const NodeId root_v = comp_root[rv];
    if (hu == hv) {
      // Equal heights: the two roots merge under a new shared parent.
      const NodeId a = new_abstract(t);
      attach(t, a, root_u);
      attach(t, a, root_v);
      const std::uint32_t r = uf.unite(ru, rv);
      comp_root[r] = a;
      comp_height[r] = hu + 1;
    } else if (hu > hv) {
      // The shallower component joins the taller one at its matching layer:
      // its root becomes a child of the similar leaf's ancestor hv+1 up.
      const NodeId target = ascend(t, pr.i, hv + 1);
      attach(t, target, root_v);
      const std::uint32_t r = uf.unite(ru, rv);
      comp_root[r] = root_u;
      comp_height[r] = hu;
    } else {
      const NodeId target = ascend(t, pr.j, hu + 1);
      attach(t, target, root_u);
      const std::uint32_t r = uf.unite(rv, ru);
      comp_root[r] = root_v;
      comp_height[r] = hv;
    }
    --components;
    ++st.effective_steps;
  }
  if (components == 1) t.root = comp_root[uf.find(0)];
  if (stats) *stats = st;
  return t;
}

AbstractTree build_tree(const std::vector<std::string>& chunk_ids,
                        const Embeddings& leaf_vecs,
                        const std::vector<SimilarPair>& stream,
                        BuildStats* stats) {
  AbstractTree t = build_forest(chunk_ids, leaf_vecs, stream, stats);
  if (t.root == kNoNode) {
    std::string roots;
    for (NodeId r : component_roots(t)) {
      if (!roots.empty()) roots += ", ";
      roots += std::to_string(r);
    }
    throw DataError(
        "similarity stream exhausted before the forest became one tree; "
        "residual component roots: " +
        roots);
  }
  return t;
}

std::vector<NodeId> component_roots(const AbstractTree& t) {
  std::vector<NodeId> roots;
  for (const TreeNode& n : t.nodes) {
    if (n.parent == kNoNode) roots.push_back(n.id);
  }
  return roots;
}

void connect_residual(AbstractTree& t) {
  std::vector<NodeId> roots = component_roots(t);
  if (roots.empty()) throw DataError("empty forest");

  struct Comp {
    NodeId root;
    std::uint32_t height;
    std::size_t leaves;
    std::vector<float> centroid;  // unnormalized running sum
  };
  auto norm_of = [](const std::vector<float>& v) {
    double sq = 0.0;
    for (float x : v) sq += static_cast<double>(x) * x;
    return std::sqrt(sq);
  };
  auto cos_between = [&](const Comp& a, const Comp& b) {
    double num = 0.0;
    for (std::size_t k = 0; k < a.centroid.size(); ++k) {
      num += static_cast<double>(a.centroid[k]) * b.centroid[k];
    }
    const double denom = norm_of(a.centroid) * norm_of(b.centroid);
    return denom == 0.0 ? 0.0 : num / denom;
  };

  std::vector<Comp> comps;
  for (NodeId r : roots) {
    Comp c;
    c.root = r;
    c.height = node_height(t, r);
    std::vector<NodeId> ls = subtree_leaves(t, r);
    c.leaves = ls.size();
    c.centroid.assign(t.at(ls.front()).embedding.size(), 0.0f);
    for (NodeId l : ls) {
      const auto& v = t.at(l).embedding;
      for (std::size_t k = 0; k < c.centroid.size(); ++k) c.centroid[k] += v[k];
    }
    comps.push_back(std::move(c));
  }

  while (comps.size() > 1) {
    std::size_t best_a = 0, best_b = 1;
    double best = -2.0;
    for (std::size_t a = 0; a + 1 < comps.size(); ++a) {
      for (std::size_t b = a + 1; b < comps.size(); ++b) {
        const double s = cos_between(comps[a], comps[b]);
        if (s > best) {
          best = s;
          best_a = a;
          best_b = b;
        }
      }
    }
    Comp& ca = comps[best_a];
    Comp& cb = comps[best_b];
    if (ca.height == cb.height) {
      const NodeId a = new_abstract(t);
      const NodeId first = std::min(ca.root, cb.root);
      const NodeId second = std::max(ca.root, cb.root);
      attach(t, a, first);
      attach(t, a, second);
      ca.root = a;
      ca.height += 1;
    } else {
      Comp& tall = (ca.height > cb.height) ? ca : cb;
      Comp& shrt = (ca.height > cb.height) ? cb : ca;
      // Attach below the tall component's leaf most similar to the short
      // component's centroid, at the layer matching the short tree's height.
      std::vector<NodeId> tall_leaves = subtree_leaves(t, tall.root);
      double short_norm = norm_of(shrt.centroid);
      if (short_norm == 0.0) short_norm = 1.0;
      NodeId best_leaf = tall_leaves.front();
      double best_sim = -2.0;
      for (NodeId l : tall_leaves) {
        const auto& v = t.at(l).embedding;
        double s = 0.0;
        for (std::size_t k = 0; k < v.size(); ++k) {
          s += static_cast<double>(v[k]) * shrt.centroid[k];
        }
        s /= short_norm;
        if (s > best_sim) {
          best_sim = s;
          best_leaf = l;
        }
      }
      const NodeId target = ascend(t, best_leaf, shrt.height + 1);
      attach(t, target, shrt.root);
      ca.root = tall.root;
      ca.height = tall.height;
    }
    ca.leaves += cb.leaves;
    for (std::size_t k = 0; k < ca.centroid.size(); ++k) {
      ca.centroid[k] += cb.centroid[k];
    }
    comps.erase(comps.begin() + static_cast<std::ptrdiff_t>(best_b));
  }
  t.root = comps.front().root;
}

void rebalance(AbstractTree& t, std::size_t max_children) {
  if (max_children < 3) throw UsageError("max_children must be at least 3");
  if (t.root == kNoNode) throw DataError("rebalance requires a rooted tree");
  for (;;) {
    // Depth map via BFS; re-derived each round because splits change shape.
    std::vector<std::uint32_t> depth(t.nodes.size(), 0);
    std::vector<NodeId> order;
    order.push_back(t.root);
    for (std::size_t q = 0; q < order.size(); ++q) {
      const NodeId id = order[q];
      for (NodeId c : t.at(id).children) {
        depth[c] = depth[id] + 1;
        order.push_back(c);
      }
    }
    NodeId pick = kNoNode;
    std::uint32_t pick_depth = 0;
    for (NodeId id : order) {
      if (t.at(id).children.size() <= max_children) continue;
      // Bottom-up: deepest overloaded node first, then smallest id.
      if (pick == kNoNode || depth[id] > pick_depth ||
          (depth[id] == pick_depth && id < pick)) {
        pick = id;
        pick_depth = depth[id];
      }
    }
    if (pick == kNoNode) return;

    const std::size_t m = t.at(pick).children.size();
    const std::size_t left_n = (m + 1) / 2;
    const NodeId right = new_abstract(t);
    TreeNode& xs = t.at(pick);
    TreeNode& rs = t.at(right);
    rs.children.assign(xs.children.begin() +
                           static_cast<std::ptrdiff_t>(left_n),
                       xs.children.end());
    xs.children.resize(left_n);
    for (NodeId c : rs.children) t.at(c).parent = right;
    xs.stale = true;
    xs.abstract_text.clear();
    xs.has_embedding = false;
    xs.embedding.clear();
    if (pick == t.root) {
      const NodeId nr = new_abstract(t);
      attach(t, nr, pick);
      attach(t, nr, right);
      t.root = nr;
    } else {
      const NodeId parent = xs.parent;
      rs.parent = parent;
      auto& pc = t.at(parent).children;
      auto it = std::find(pc.begin(), pc.end(), pick);
      pc.insert(it + 1, right);
    }
  }
}

std::uint32_t tree_depth(const AbstractTree& t) {
  if (t.root == kNoNode) throw DataError("tree has no root");
  return node_height(t, t.root);
}

std::uint32_t node_depth(const AbstractTree& t, NodeId id) {
  std::uint32_t d = 0;
  while (t.at(id).parent != kNoNode) {
    id = t.at(id).parent;
    ++d;
  }
  return d;
}

std::uint32_t node_height(const AbstractTree& t, NodeId id) {
  std::uint32_t h = 0;
  while (!t.at(id).is_leaf) {
    id = t.at(id).children.front();
    ++h;
  }
  return h;
}

NodeId lca(const AbstractTree& t, NodeId a, NodeId b) {
  std::uint32_t da = node_depth(t, a);
  std::uint32_t db = node_depth(t, b);
  while (da > db) {
    a = t.at(a).parent;
    --da;
  }
  while (db > da) {
    b = t.at(b).parent;
    --db;
  }
  while (a != b) {
    a = t.at(a).parent;
    b = t.at(b).parent;
  }
  return a;
}

std::vector<NodeId> leaf_ids(const AbstractTree& t) {
  std::vector<NodeId> out;
  for (const TreeNode& n : t.nodes) {
    if (n.is_leaf) out.push_back(n.id);
  }
  return out;
}

std::vector<std::vector<NodeId>> layers(const AbstractTree& t) {
  if (t.root == kNoNode) throw DataError("tree has no root");
  std::vector<std::vector<NodeId>> out;
  std::vector<NodeId> cur = {t.root};
  while (!cur.empty()) {
    out.push_back(cur);
    std::vector<NodeId> next;
    for (NodeId id : cur) {
      const auto& cs = t.at(id).children;
      next.insert(next.end(), cs.begin(), cs.end());
    }
    cur = std::move(next);
  }
  return out;
}

std::vector<NodeId> subtree_leaves(const AbstractTree& t, NodeId id) {
  std::vector<NodeId> out;
  std::vector<NodeId> stack = {id};
  while (!stack.empty()) {
    const NodeId x = stack.back();
    stack.pop_back();
    if (t.at(x).is_leaf) {
      out.push_back(x);
      continue;
    }
    const auto& cs = t.at(x).children;
    for (auto it = cs.rbegin(); it != cs.rend(); ++it) stack.push_back(*it);
  }
  return out;
}

void validate_tree(const AbstractTree& t, std::size_t max_children) {
  if (t.nodes.empty()) throw VerificationError("tree has no nodes");
  if (t.root == kNoNode) throw VerificationError("tree has no root");
  if (t.at(t.root).parent != kNoNode) {
    throw VerificationError("root has a parent");
  }
  std::vector<char> seen(t.nodes.size(), 0);
  std::vector<NodeId> order = {t.root};
  seen[t.root] = 1;
  std::size_t leaves_seen = 0;
  for (std::size_t q = 0; q < order.size(); ++q) {
    const TreeNode& n = t.at(order[q]);
    if (n.is_leaf) {
      if (!n.children.empty()) {
        throw VerificationError("leaf " + std::to_string(n.id) +
                                " has children");
      }
      ++leaves_seen;
    } else {
      if (n.children.size() < 2) {
        throw VerificationError("abstract node " + std::to_string(n.id) +
                                " has fewer than 2 children");
      }
      if (max_children > 0 && n.children.size() > max_children) {
        throw VerificationError("abstract node " + std::to_string(n.id) +
                                " exceeds max fanout: " +
                                std::to_string(n.children.size()));
      }
    }
    for (NodeId c : n.children) {
      if (c >= t.nodes.size()) {
        throw VerificationError("child id out of range");
      }
      if (t.at(c).parent != n.id) {
        throw VerificationError("parent/child mismatch at node " +
                                std::to_string(c));
      }
      if (seen[c]) {
        throw VerificationError("node " + std::to_string(c) +
                                " reached twice (cycle or shared child)");
      }
      seen[c] = 1;
      order.push_back(c);
    }
  }
  if (order.size() != t.nodes.size()) {
    throw VerificationError("unreachable nodes: " +
                            std::to_string(t.nodes.size() - order.size()));
  }
  if (leaves_seen != t.leaf_count) {
    throw VerificationError("leaf_count mismatch: stored " +
                            std::to_string(t.leaf_count) + ", found " +
                            std::to_string(leaves_seen));
  }
  // Equal leaf depth.
  std::uint32_t expect = kNoNode;
  for (const TreeNode& n : t.nodes) {
    if (!n.is_leaf) continue;
    const std::uint32_t d = node_depth(t, n.id);
    if (expect == kNoNode) {
      expect = d;
    } else if (d != expect) {
      throw VerificationError("unequal leaf depth: leaf " +
                              std::to_string(n.id) + " at " +
                              std::to_string(d) + ", expected " +
                              std::to_string(expect));
    }
  }
}

NodeId insert_leaf(AbstractTree& t, const std::string& chunk_id,
                   const std::vector<float>& vec) {
  if (t.root == kNoNode) throw DataError("insert into an unrooted tree");
  if (t.at(t.root).is_leaf) {
    throw DataError("tree has no abstract level to insert into");
  }
  NodeId nearest = kNoNode;
  float best = -2.0f;
  for (const TreeNode& n : t.nodes) {
    if (!n.is_leaf) continue;
    const float s = cosine(n.embedding, vec);
    if (s > best) {
      best = s;
      nearest = n.id;
    }
  }
  const NodeId parent = t.at(nearest).parent;
  TreeNode leaf;
  leaf.id = static_cast<NodeId>(t.nodes.size());
  leaf.is_leaf = true;
  leaf.chunk_id = chunk_id;
  leaf.embedding = vec;
  leaf.has_embedding = true;
  t.nodes.push_back(std::move(leaf));
  attach(t, parent, t.nodes.back().id);
  for (NodeId a = parent; a != kNoNode; a = t.at(a).parent) {
    t.at(a).stale = true;
  }
  t.leaf_count += 1;
  return t.nodes.back().id;
}

std::vector<NodeId> insert_batch(AbstractTree& t,
                                 const std::vector<std::string>& chunk_ids,
                                 const Embeddings& vecs) {
  if (t.root == kNoNode) throw DataError("insert into an unrooted tree");
  if (chunk_ids.empty()) return {};
  AbstractTree sub = build_tree(chunk_ids, vecs, exact_pair_stream(vecs));

  // Graft the subtree's nodes into the main array, remapping ids.
  const NodeId offset = static_cast<NodeId>(t.nodes.size());
  std::vector<NodeId> new_leaves;
  for (TreeNode& n : sub.nodes) {
    TreeNode moved = std::move(n);
    moved.id += offset;
    if (moved.parent != kNoNode) moved.parent += offset;
    for (NodeId& c : moved.children) c += offset;
    if (moved.is_leaf) new_leaves.push_back(moved.id);
    t.nodes.push_back(std::move(moved));
  }
  t.leaf_count += sub.leaf_count;
  const NodeId sub_root = sub.root + offset;

  const std::uint32_t main_h = node_height(t, t.root);
  const std::uint32_t sub_h = node_height(t, sub_root);
  if (main_h == sub_h) {
    const NodeId nr = new_abstract(t);
    attach(t, nr, t.root);
    attach(t, nr, sub_root);
    t.root = nr;
    return new_leaves;
  }
  const NodeId tall_root = (main_h > sub_h) ? t.root : sub_root;
  const NodeId short_root = (main_h > sub_h) ? sub_root : t.root;
  const std::uint32_t short_h = std::min(main_h, sub_h);
  const std::vector<float> c_short = subtree_centroid(t, short_root);

  // Anchor: the node at height short_h+1 in the tall tree whose subtree
  // centroid is most similar to the short tree's centroid.
  NodeId anchor = kNoNode;
  double best = -2.0;
  std::vector<NodeId> stack = {tall_root};
  while (!stack.empty()) {
    const NodeId x = stack.back();
    stack.pop_back();
    const std::uint32_t h = node_height(t, x);
    if (h == short_h + 1) {
      const std::vector<float> c = subtree_centroid(t, x);
      const double s = cosine(c, c_short);
      if (s > best) {
        best = s;
        anchor = x;
      }
      continue;
    }
    if (h > short_h + 1) {
      const auto& cs = t.at(x).children;
      for (auto it = cs.rbegin(); it != cs.rend(); ++it) stack.push_back(*it);
    }
  }
  attach(t, anchor, short_root);
  t.root = tall_root;
  for (NodeId a = anchor; a != kNoNode; a = t.at(a).parent) {
    t.at(a).stale = true;
  }
  return new_leaves;
}

}  // namespace hat
