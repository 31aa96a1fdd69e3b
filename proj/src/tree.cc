#include "fedtree/tree.h"

#include <sstream>

#include "fedtree/error.h"

namespace fedtree {

std::optional<VertexId> DeviceTree::leaf_vertex(std::size_t node) const {
  if (node >= nodes_.size() || nodes_[node].role != TreeNodeRole::kLeaf) return std::nullopt;
  return nodes_[node].vertex;
}

std::string DeviceTree::ToDot() const {
  std::ostringstream out;
  out << "graph tree_" << center_ << " {\n";
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const auto& node = nodes_[i];
    out << "  n" << i << " [label=\"";
    switch (node.role) {
      case TreeNodeRole::kLeaf: out << node.vertex << "\", shape=circle"; break;
      case TreeNodeRole::kParent: out << 'P' << node.pair + 1 << "\", shape=box"; break;
      case TreeNodeRole::kRoot: out << "R\", shape=box"; break;
    }
    out << "];\n";
  }
  for (const auto& [parent, child] : edges_) out << "  n" << parent << " -- n" << child << ";\n";
  out << "}\n";
  return out.str();
}

DeviceTree BuildTree(VertexId center, std::span<const VertexId> selected) {
  DeviceTree tree;
  tree.center_ = center;
  tree.num_pairs_ = selected.size();
  if (selected.empty()) return tree;

  const std::size_t pairs = selected.size();
  tree.nodes_.reserve(3 * pairs + 1);
  for (std::size_t i = 0; i < pairs; ++i) {
    tree.nodes_.push_back({TreeNodeRole::kLeaf, center, i});
    tree.nodes_.push_back({TreeNodeRole::kLeaf, selected[i], i});
  }
  for (std::size_t i = 0; i < pairs; ++i) tree.nodes_.push_back({TreeNodeRole::kParent, 0, i});
  tree.nodes_.push_back({TreeNodeRole::kRoot, 0, 0});

  const std::size_t root = 3 * pairs;
  tree.edges_.reserve(3 * pairs);
  for (std::size_t i = 0; i < pairs; ++i) {
    const std::size_t parent = 2 * pairs + i;
    tree.edges_.emplace_back(parent, 2 * i);
    tree.edges_.emplace_back(parent, 2 * i + 1);
  }
  for (std::size_t i = 0; i < pairs; ++i) tree.edges_.emplace_back(root, 2 * pairs + i);
  return tree;
}

std::vector<std::vector<std::size_t>> TreeAdjacency(const DeviceTree& tree) {
  if (tree.empty()) {
    throw Error(ErrorCode::kEmptyTree, "device " + std::to_string(tree.center()) + " has no tree");
  }
  std::vector<std::vector<std::size_t>> adj(tree.num_nodes());
  for (const auto& [parent, child] : tree.edges()) {
    adj[parent].push_back(child);
    adj[child].push_back(parent);
  }
  return adj;
}

}  // namespace fedtree
