#include "hat/tree_io.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "hat/errors.hpp"

namespace hat {

namespace fs = std::filesystem;

void save_tree(const std::string& json_path, const AbstractTree& t,
               const std::string& sidecar_name) {
  if (t.root == kNoNode) throw DataError("refusing to save an unrooted tree");
  nlohmann::ordered_json doc;
  doc["format"] = "hat-tree";
  doc["version"] = kTreeFormatVersion;
  doc["root"] = t.root;
  doc["leaf_count"] = t.leaf_count;
  doc["depth"] = tree_depth(t);
  doc["embedding_sidecar"] = sidecar_name;

  Embeddings vecs;
  nlohmann::ordered_json nodes = nlohmann::ordered_json::array();
  for (const TreeNode& n : t.nodes) {
    nlohmann::ordered_json j;
    j["id"] = n.id;
    if (n.parent == kNoNode) {
      j["parent"] = nullptr;
    } else {
      j["parent"] = n.parent;
    }
    j["kind"] = n.is_leaf ? "leaf" : "abstract";
    if (n.is_leaf) {
      j["chunk_id"] = n.chunk_id;
    } else {
      j["children"] = n.children;
      j["abstract"] = n.abstract_text;
      if (n.stale) j["stale"] = true;
    }
    if (n.has_embedding) {
      j["vec"] = vecs.count();
      vecs.append(n.embedding);
    }
    nodes.push_back(std::move(j));
  }
  doc["nodes"] = std::move(nodes);

  const fs::path dir = fs::path(json_path).parent_path();
  save_sidecar((dir / sidecar_name).string(), vecs);
  std::ofstream out(json_path, std::ios::binary);
  if (!out) throw DataError("cannot write tree index: " + json_path);
  out << doc.dump(1) << '\n';
  if (!out) throw DataError("failed writing tree index: " + json_path);
}

AbstractTree load_tree(const std::string& json_path) {
  std::ifstream in(json_path, std::ios::binary);
  if (!in) throw DataError("cannot open tree index: " + json_path);
  nlohmann::json doc = nlohmann::json::parse(in, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) {
    throw DataError("malformed tree index: " + json_path);
  }
  if (doc.value("format", "") != std::string("hat-tree")) {
    throw DataError("not a tree index file: " + json_path);
  }
  const int version = doc.value("version", -1);
  if (version != kTreeFormatVersion) {
    throw DataError("tree index version " + std::to_string(version) +
                    " unsupported (reader supports " +
                    std::to_string(kTreeFormatVersion) + ")");
  }
  const fs::path dir = fs::path(json_path).parent_path();
  const std::string sidecar =
      doc.at("embedding_sidecar").get<std::string>();
  const Embeddings vecs = load_sidecar((dir / sidecar).string());

  AbstractTree t;
  t.root = doc.at("root").get<NodeId>();
  t.leaf_count = doc.at("leaf_count").get<std::uint32_t>();
  const auto& nodes = doc.at("nodes");
  t.nodes.resize(nodes.size());
  for (const auto& j : nodes) {
    try {
      const NodeId id = j.at("id").get<NodeId>();
      if (id >= t.nodes.size()) {
        throw DataError("node id out of range in " + json_path);
      }
      TreeNode& n = t.nodes[id];
      n.id = id;
      n.parent =
          j.at("parent").is_null() ? kNoNode : j.at("parent").get<NodeId>();
      n.is_leaf = j.at("kind").get<std::string>() == "leaf";
      if (n.is_leaf) {
        n.chunk_id = j.at("chunk_id").get<std::string>();
      } else {
        n.children = j.at("children").get<std::vector<NodeId>>();
        n.abstract_text = j.at("abstract").get<std::string>();
        n.stale = j.value("stale", false);
      }
      if (j.contains("vec")) {
        const auto row = j.at("vec").get<std::size_t>();
        if (row >= vecs.count()) {
          throw DataError("sidecar row out of range in " + json_path);
        }
        auto span = vecs.at(row);
        n.embedding.assign(span.begin(), span.end());
        n.has_embedding = true;
      }
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("malformed tree node record: ") + e.what());
    }
  }
  return t;
}

namespace {
std::string dot_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out;
}
}  // namespace

std::string export_dot(const AbstractTree& t) {
  std::string out = "digraph tree {\n";
  for (const TreeNode& n : t.nodes) {
    if (n.is_leaf) {
      out += "  n" + std::to_string(n.id) + " [label=\"" +
             dot_escape(n.chunk_id) + "\", shape=box];\n";
    }
  }
  for (const TreeNode& n : t.nodes) {
    for (NodeId c : n.children) {
      out += "  n" + std::to_string(n.id) + " -> n" + std::to_string(c) +
             ";\n";
    }
  }
  out += "}\n";
  return out;
}

}  // namespace hat
