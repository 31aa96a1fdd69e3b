#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fedtree/balancer.h"
#include "fedtree/gnn.h"
#include "fedtree/graph.h"
#include "fedtree/tree.h"

namespace fedtree::testing {

// A complete federated training setup on a tiny graph. Heap-allocated so the
// internal pointers (layout -> exchange, trainer -> layout/tasks) stay valid.
struct SmallInstance {
  GlobalGraph graph;
  GlobalGraph structure;
  SplitSpec split;
  NeighborSelection selection;
  std::vector<DeviceTree> trees;
  FeatureExchange exchange;
  TrainingLayout layout;
  std::optional<SupervisedTask> supervised;
  std::optional<LinkTask> link;
  std::optional<Trainer> trainer;
};

// Federated setup on `graph`: greedy-init selection, trees, one LDP
// encoding per sender (epsilon 2) and a trainer.
std::unique_ptr<SmallInstance> MakeInstance(const GlobalGraph& graph, TaskMode mode,
                                            std::uint64_t seed, double dropout = 0.0,
                                            std::size_t hidden_dim = 4, int threads = 1);

// Six vertices, eight edges, three features, two classes. The selection is
// greedy init so that trees differ from ego networks.
std::unique_ptr<SmallInstance> MakeSmallInstance(TaskMode mode, std::uint64_t seed,
                                                 double dropout = 0.0);

struct GradientCheck {
  double max_relative_error = 0.0;
  std::string worst_tensor;
  std::size_t entries_checked = 0;
  // Smallest analytic gradient norm over the checked tensors; guards against
  // a vacuous pass when every unit is inactive.
  double min_gradient_norm = 0.0;
};

// Central finite differences (step h) of Trainer::Loss against its analytic
// gradient, tensor by tensor, for a fixed epoch sample. Relative error of a
// tensor is ||analytic - numeric|| / max(||analytic||, ||numeric||).
GradientCheck CheckGradients(const Trainer& trainer, const EpochSample& sample, double h = 1e-5);

}  // namespace fedtree::testing
