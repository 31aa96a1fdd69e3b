#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace fedtree {

using VertexId = std::uint32_t;

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

struct FeatureBounds {
  double lower = 0.0;
  double upper = 1.0;

  double midpoint() const { return 0.5 * (lower + upper); }
  double width() const { return upper - lower; }
};

// Undirected edge, stored with first < second.
struct Edge {
  VertexId first = 0;
  VertexId second = 0;

  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

// Immutable, validated global graph. Adjacency is kept in CSR form with each
// neighbor list sorted ascending.
class GlobalGraph {
 public:
  GlobalGraph() = default;

  // Validates and builds the graph. Rejects self-loops, duplicate edges,
  // out-of-range ids, feature/label row counts that disagree with
  // `num_vertices`, and feature values outside `bounds`. `features` may have
  // zero columns and `labels` may be empty for topology-only graphs.
  static GlobalGraph Create(std::size_t num_vertices, std::vector<Edge> edges, Matrix features,
                            std::vector<int> labels, FeatureBounds bounds = {});

  // Topology-only convenience constructor (no features, no labels).
  static GlobalGraph FromEdges(std::size_t num_vertices, std::vector<Edge> edges);

  std::size_t num_vertices() const { return offsets_.empty() ? 0 : offsets_.size() - 1; }
  std::size_t num_edges() const { return edges_.size(); }
  std::size_t feature_dim() const { return static_cast<std::size_t>(features_.cols()); }
  int num_classes() const { return num_classes_; }

  std::span<const Edge> edges() const { return edges_; }
  std::span<const VertexId> neighbors(VertexId u) const {
    return {adjacency_.data() + offsets_[u], adjacency_.data() + offsets_[u + 1]};
  }
  std::size_t degree(VertexId u) const { return offsets_[u + 1] - offsets_[u]; }
  std::size_t max_degree() const;
  bool has_edge(VertexId u, VertexId v) const;

  const Matrix& features() const { return features_; }
  const std::vector<int>& labels() const { return labels_; }
  const FeatureBounds& bounds() const { return bounds_; }

  // Same vertices, features and labels; only the listed edges.
  GlobalGraph WithEdges(std::vector<Edge> edges) const;

 private:
  std::vector<Edge> edges_;
  std::vector<std::size_t> offsets_;
  std::vector<VertexId> adjacency_;
  Matrix features_;
  std::vector<int> labels_;
  int num_classes_ = 0;
  FeatureBounds bounds_;
};

struct LoadOptions {
  FeatureBounds bounds;
  // Min-max rescale every feature dimension onto `bounds` after parsing.
  bool rescale = true;
};

// Reads the three CSV files (edges `u,v`; one feature row per vertex; one
// label per vertex). The feature file defines the vertex count. An empty
// label path loads an unlabeled graph.
GlobalGraph LoadGraph(const std::filesystem::path& edge_path,
                      const std::filesystem::path& feature_path,
                      const std::filesystem::path& label_path, const LoadOptions& options = {});

// Edge-only loader used by the oracle tooling; vertex count is max id + 1.
GlobalGraph LoadEdgeList(const std::filesystem::path& edge_path);

// Per-dimension min-max rescale onto `bounds`. Constant columns map to the
// lower bound.
void RescaleFeatures(Matrix& features, const FeatureBounds& bounds);

// What a single device holds: its own feature and label plus the ids of its
// neighbors. Nothing about any other vertex beyond those ids.
struct EgoNetwork {
  VertexId center = 0;
  std::vector<VertexId> neighbors;
  Vector center_feature;
  int center_label = -1;
};

std::vector<EgoNetwork> SplitEgoNetworks(const GlobalGraph& graph);

enum class SplitMode { kSupervised, kUnsupervised };
enum class SplitPart : std::uint8_t { kTrain = 0, kValidation = 1, kTest = 2 };

struct SplitRatios {
  double train = 0.5;
  double validation = 0.25;
  double test = 0.25;
};

// Membership markers over vertices (supervised) or over `graph.edges()`
// indices (unsupervised).
struct SplitSpec {
  SplitMode mode = SplitMode::kSupervised;
  std::vector<SplitPart> membership;
  std::uint64_t seed = 0;

  std::size_t count(SplitPart part) const;
  std::vector<std::size_t> members(SplitPart part) const;
};

// Largest-remainder split sizes for `universe` items; ties in the fractional
// part go to the earlier part.
std::array<std::size_t, 3> SplitSizes(std::size_t universe, const SplitRatios& ratios);

SplitSpec MakeSplit(const GlobalGraph& graph, SplitMode mode, const SplitRatios& ratios,
                    std::uint64_t seed);

}  // namespace fedtree
