#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedtree/graph.h"

namespace fedtree {

enum class TreeNodeRole { kLeaf, kParent, kRoot };

struct TreeNode {
  TreeNodeRole role = TreeNodeRole::kLeaf;
  // Real vertex carried by a leaf; unused for virtual nodes.
  VertexId vertex = 0;
  // Leaf pair index for leaves and parents.
  std::size_t pair = 0;
};

// A device's leaf-pair tree. For |N| selected neighbors the layout is
//   [0, 2|N|)        leaves; leaf 2i is the center, leaf 2i+1 neighbor i
//   [2|N|, 3|N|)     parents; parent i joins leaves 2i and 2i+1
//   3|N|             root, joined to every parent
// A device with no selected neighbors has an empty tree (no nodes at all).
class DeviceTree {
 public:
  DeviceTree() = default;

  VertexId center() const { return center_; }
  std::size_t num_pairs() const { return num_pairs_; }
  bool empty() const { return nodes_.empty(); }
  std::size_t num_nodes() const { return nodes_.size(); }
  std::size_t num_leaves() const { return 2 * num_pairs_; }

  std::span<const TreeNode> nodes() const { return nodes_; }
  // (parent, child) pairs.
  std::span<const std::pair<std::size_t, std::size_t>> edges() const { return edges_; }
  std::optional<VertexId> leaf_vertex(std::size_t node) const;
  std::size_t root() const { return nodes_.size() - 1; }

  // Graphviz rendering for debugging.
  std::string ToDot() const;

 private:
  friend DeviceTree BuildTree(VertexId center, std::span<const VertexId> selected);

  VertexId center_ = 0;
  std::size_t num_pairs_ = 0;
  std::vector<TreeNode> nodes_;
  std::vector<std::pair<std::size_t, std::size_t>> edges_;
};

DeviceTree BuildTree(VertexId center, std::span<const VertexId> selected);

// Symmetric adjacency lists over node indices. Throws kEmptyTree.
std::vector<std::vector<std::size_t>> TreeAdjacency(const DeviceTree& tree);

}  // namespace fedtree
