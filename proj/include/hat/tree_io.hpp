#pragma once

#include <string>

#include "hat/tree.hpp"

namespace hat {

inline constexpr int kTreeFormatVersion = 1;

// Writes the tree as a versioned JSON document at `json_path` plus a binary
// embedding sidecar next to it (referenced by relative name inside the
// JSON). Output is byte-deterministic for a given tree.
void save_tree(const std::string& json_path, const AbstractTree& t,
               const std::string& sidecar_name = "embeddings.psie");

// Round-trip loader; rejects unknown format versions by naming both the file
// version and the supported one.
AbstractTree load_tree(const std::string& json_path);

// Parent -> child edges in DOT syntax, one per line.
std::string export_dot(const AbstractTree& t);

}  // namespace hat
