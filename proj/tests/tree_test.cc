#include "fedtree/tree.h"

#include <algorithm>
#include <vector>

#include <gtest/gtest.h>

#include "fedtree/error.h"

namespace fedtree {
namespace {

TEST(BuildTreeTest, FourNeighborExample) {
  const std::vector<VertexId> selected = {2, 3, 4, 5};
  const auto tree = BuildTree(1, selected);
  EXPECT_EQ(tree.num_nodes(), 13u);
  EXPECT_EQ(tree.edges().size(), 12u);
  EXPECT_EQ(tree.num_leaves(), 8u);
  std::size_t leaves = 0;
  std::size_t parents = 0;
  std::size_t roots = 0;
  for (const auto& node : tree.nodes()) {
    leaves += node.role == TreeNodeRole::kLeaf;
    parents += node.role == TreeNodeRole::kParent;
    roots += node.role == TreeNodeRole::kRoot;
  }
  EXPECT_EQ(leaves, 8u);
  EXPECT_EQ(parents, 4u);
  EXPECT_EQ(roots, 1u);
  // Leaf pairs: (center, neighbor i) at nodes 2i and 2i + 1.
  for (std::size_t i = 0; i < selected.size(); ++i) {
    EXPECT_EQ(tree.leaf_vertex(2 * i), 1u);
    EXPECT_EQ(tree.leaf_vertex(2 * i + 1), selected[i]);
  }
  EXPECT_FALSE(tree.leaf_vertex(tree.root()).has_value());
  EXPECT_EQ(tree.nodes()[tree.root()].role, TreeNodeRole::kRoot);

  const auto adj = TreeAdjacency(tree);
  EXPECT_EQ(adj[tree.root()].size(), 4u);
}

TEST(BuildTreeTest, SinglePair) {
  const std::vector<VertexId> selected = {7};
  const auto tree = BuildTree(0, selected);
  EXPECT_EQ(tree.num_nodes(), 4u);
  const auto adj = TreeAdjacency(tree);
  EXPECT_EQ(adj[tree.root()].size(), 1u);
  EXPECT_EQ(adj[2].size(), 3u);  // the parent
}

TEST(BuildTreeTest, EmptySelectionGivesSentinel) {
  const auto tree = BuildTree(3, {});
  EXPECT_TRUE(tree.empty());
  EXPECT_EQ(tree.num_nodes(), 0u);
  EXPECT_EQ(tree.center(), 3u);
  try {
    TreeAdjacency(tree);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyTree);
  }
}

TEST(TreeAdjacencyTest, StructuralProperties) {
  for (std::size_t pairs = 1; pairs <= 12; ++pairs) {
    std::vector<VertexId> selected;
    for (std::size_t i = 0; i < pairs; ++i) selected.push_back(static_cast<VertexId>(100 + i));
    const auto tree = BuildTree(0, selected);
    ASSERT_EQ(tree.num_nodes(), 3 * pairs + 1);
    ASSERT_EQ(tree.edges().size(), 3 * pairs);
    const auto adj = TreeAdjacency(tree);
    std::size_t degree_sum = 0;
    for (std::size_t n = 0; n < adj.size(); ++n) {
      degree_sum += adj[n].size();
      for (std::size_t m : adj[n]) {
        EXPECT_NE(std::find(adj[m].begin(), adj[m].end(), n), adj[m].end()) << "asymmetric";
      }
      if (tree.leaf_vertex(n)) {
        EXPECT_EQ(adj[n].size(), 1u);
      }
    }
    EXPECT_EQ(degree_sum, 2 * tree.edges().size());
    EXPECT_EQ(adj[tree.root()].size(), pairs);
  }
}

TEST(DeviceTreeTest, DotExportListsEveryEdge) {
  const std::vector<VertexId> selected = {4, 9};
  const auto dot = BuildTree(1, selected).ToDot();
  EXPECT_EQ(dot.rfind("graph tree_1 {", 0), 0u);
  EXPECT_NE(dot.find("n6 -- n4;"), std::string::npos);
  EXPECT_NE(dot.find("n4 -- n1;"), std::string::npos);
  EXPECT_NE(dot.find("label=\"9\""), std::string::npos);
}

}  // namespace
}  // namespace fedtree
