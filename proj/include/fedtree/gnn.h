#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "fedtree/balancer.h"
#include "fedtree/graph.h"
#include "fedtree/ldp.h"
#include "fedtree/rng.h"
#include "fedtree/tree.h"

namespace fedtree {

enum class TaskMode { kSupervised, kUnsupervised };

struct TrainConfig {
  std::size_t epochs = 300;
  double learning_rate = 0.01;
  double dropout = 0.01;
  std::size_t hidden_dim = 16;
  double epsilon = 2.0;
  std::size_t neg_per_positive = 1;
  std::uint64_t seed = 0;
  TaskMode mode = TaskMode::kSupervised;
  int threads = 1;
};

// Shared weights: two GCN layers and, in supervised mode, a linear head.
struct ModelParams {
  Matrix w1;      // d x h
  Matrix w2;      // h x h
  Matrix head_w;  // h x L (empty in unsupervised mode)
  Matrix head_b;  // 1 x L

  // Glorot-uniform weights, zero head bias. `num_classes == 0` omits the head.
  static ModelParams Init(std::size_t input_dim, std::size_t hidden_dim, std::size_t num_classes,
                          Rng& rng);
  static ModelParams ZerosLike(const ModelParams& other);

  std::vector<std::pair<std::string, Matrix*>> Tensors();
  std::vector<std::pair<std::string, const Matrix*>> Tensors() const;
  bool AllFinite() const;
};

// Checkpoint as text: per tensor a header line `name rows cols` followed by
// one CSV row per matrix row.
void WriteCheckpoint(std::ostream& out, const ModelParams& params);
ModelParams ReadCheckpoint(std::istream& in);

// D^-1/2 (A + I) D^-1/2 in CSR form. Symmetric, so it is its own transpose.
class NormalizedAdjacency {
 public:
  NormalizedAdjacency() = default;
  // `adjacency` lists neighbors without self-loops.
  explicit NormalizedAdjacency(const std::vector<std::vector<std::size_t>>& adjacency);

  std::size_t rows() const { return offsets_.empty() ? 0 : offsets_.size() - 1; }
  // out = A_hat * in. Rows are independent, so threading does not change the result.
  void Multiply(const Matrix& in, Matrix& out, int threads = 1) const;
  double coefficient(std::size_t row, std::size_t col) const;

 private:
  std::vector<std::size_t> offsets_;
  std::vector<std::size_t> cols_;
  std::vector<double> vals_;
};

// ReLU(A_hat H W), followed by inverted dropout when `dropout > 0` and an
// rng is given.
Matrix GcnLayerForward(const NormalizedAdjacency& adjacency, const Matrix& h_in, const Matrix& w,
                       double dropout = 0.0, Rng* rng = nullptr);

// Where a node's initial embedding comes from. Raw features may only appear
// on the owning device; every cross-device copy is an LDP recovery.
enum class FeatureSource : std::uint8_t { kNone, kRawOwn, kRecovered };

// Recovered features delivered to each receiver, keyed by (sender, receiver).
class FeatureExchange {
 public:
  std::uint32_t Add(VertexId sender, VertexId receiver, SparseRecovered recovered);
  std::optional<std::uint32_t> Find(VertexId sender, VertexId receiver) const;

  std::size_t size() const { return messages_.size(); }
  const SparseRecovered& message(std::uint32_t id) const { return messages_[id]; }
  VertexId sender(std::uint32_t id) const { return senders_[id]; }
  VertexId receiver(std::uint32_t id) const { return receivers_[id]; }

 private:
  std::vector<SparseRecovered> messages_;
  std::vector<VertexId> senders_;
  std::vector<VertexId> receivers_;
  std::unordered_map<std::uint64_t, std::uint32_t> index_;
};

inline constexpr std::int64_t kVirtualNode = -1;

// Disjoint union of every device's local graph, laid out for full-batch
// training: node inputs with provenance, the block-diagonal normalized
// adjacency, and for each global vertex the leaf copies that POOL averages.
struct TrainingLayout {
  std::size_t num_vertices = 0;
  std::size_t num_nodes = 0;
  NormalizedAdjacency adjacency;
  std::vector<FeatureSource> source;
  // Vertex id for raw inputs, message id for recovered ones.
  std::vector<std::uint32_t> input_ref;
  std::vector<VertexId> owner;
  std::vector<std::int64_t> vertex;
  std::vector<std::size_t> pool_offsets;  // size num_vertices + 1
  std::vector<std::size_t> pool_nodes;
  const FeatureExchange* exchange = nullptr;

  std::span<const std::size_t> pool_group(VertexId u) const {
    return {pool_nodes.data() + pool_offsets[u], pool_nodes.data() + pool_offsets[u + 1]};
  }
  // Vertices with no copy anywhere (isolated vertices).
  std::vector<VertexId> Orphans() const;
  // Leaf copies of vertex w held by a device other than w: each is one
  // embedding transfer per direction per epoch.
  std::size_t CrossDeviceCopies() const;
};

// Leaf-pair trees: center leaves take the raw own feature, neighbor leaves the
// message that neighbor sent to this device, virtual nodes zero.
// Throws kMissingFeature when a neighbor leaf has no delivered message.
TrainingLayout BuildTreeLayout(std::size_t num_vertices, std::span<const DeviceTree> trees,
                               const FeatureExchange& exchange);

// Ablation without virtual nodes: each device trains on the star formed by
// itself and its selected neighbors.
TrainingLayout BuildEgoLayout(const NeighborSelection& selection, const FeatureExchange& exchange);

// Centralized reference: the global graph itself, raw features everywhere.
TrainingLayout BuildCentralLayout(const GlobalGraph& graph);

// Throws kInvalidArgument if any raw input sits on a device other than its
// owner or a recovered message is used anywhere but at its receiver.
void ValidateProvenance(const TrainingLayout& layout);

// Mean of the leaf copies of every vertex. Orphans get a zero row.
Matrix PoolLeafEmbeddings(const TrainingLayout& layout, const Matrix& node_embeddings);

// Labels guarded so that only the owning device can read its own label.
class LocalLabels {
 public:
  LocalLabels() = default;
  explicit LocalLabels(std::vector<int> labels) : labels_(std::move(labels)) {}
  int Read(VertexId device, VertexId vertex) const;
  std::size_t size() const { return labels_.size(); }

 private:
  std::vector<int> labels_;
};

// Mean softmax cross-entropy over `vertices`; -log p is capped at -log(1e-12).
// Writes d loss / d logits into `grad_logits` when non-null.
double SupervisedLoss(const Matrix& logits, const LocalLabels& labels,
                      std::span<const VertexId> vertices, Matrix* grad_logits = nullptr);

struct DevicePair {
  VertexId device = 0;
  VertexId other = 0;
};

// Sum over devices of -log sig(h_u.h_v) over positives and -log sig(-h_u.h_v)
// over negatives, divided by the number of devices with at least one term.
double UnsupervisedLoss(const Matrix& embeddings, std::span<const DevicePair> positives,
                        std::span<const DevicePair> negatives, Matrix* grad_embeddings = nullptr);

// Uniform draws from the non-neighbors of a device (excluding itself).
class NegativeSampler {
 public:
  explicit NegativeSampler(const GlobalGraph& graph) : graph_(&graph) {}
  std::optional<VertexId> Sample(VertexId u, Rng& rng) const;

 private:
  const GlobalGraph* graph_;
};

double Accuracy(const Matrix& logits, const std::vector<int>& labels,
                std::span<const VertexId> vertices);
// Probability that a random positive outranks a random negative; ties count
// one half (rank-sum with average ranks).
double RocAuc(std::span<const double> positive_scores, std::span<const double> negative_scores);

struct SupervisedTask {
  LocalLabels labels;
  std::vector<int> truth;  // evaluation only
  std::size_t num_classes = 0;
  std::vector<VertexId> train;
  std::vector<VertexId> validation;
  std::vector<VertexId> test;
};

struct LinkTask {
  const GlobalGraph* full_graph = nullptr;
  std::vector<DevicePair> train_positives;
  std::vector<DevicePair> validation_positives;
  std::vector<DevicePair> validation_negatives;
  std::vector<DevicePair> test_positives;
  std::vector<DevicePair> test_negatives;
};

SupervisedTask MakeSupervisedTask(const GlobalGraph& graph, const SplitSpec& split);

// Training positives are (u, v) with v in N_u and (u, v) a training edge;
// evaluation negatives are uniformly sampled non-edges, one per positive.
LinkTask MakeLinkTask(const GlobalGraph& full_graph, const SplitSpec& split,
                      const NeighborSelection& selection, std::uint64_t seed);

// Edges of `split` marked as training.
std::vector<Edge> TrainingEdges(const GlobalGraph& graph, const SplitSpec& split);

struct EpochMetrics {
  std::size_t epoch = 0;
  double loss = 0.0;
  double train_metric = 0.0;
  double val_metric = 0.0;
  double test_metric = 0.0;
  double wall_ms = 0.0;
};

struct EvalMetrics {
  double train = 0.0;
  double validation = 0.0;
  double test = 0.0;
};

// Stochastic parts of one epoch: dropout masks and negative samples.
struct EpochSample {
  Matrix mask1;
  Matrix mask2;
  std::vector<DevicePair> negatives;
};

// Full-batch trainer over a TrainingLayout. One shared ModelParams is updated
// with Adam after each epoch's aggregated loss.
class Trainer {
 public:
  Trainer(const TrainingLayout& layout, const Matrix& raw_features, TaskMode mode,
          const TrainConfig& config, const SupervisedTask* supervised, const LinkTask* link);

  EpochMetrics TrainEpoch();
  EvalMetrics Evaluate() const;

  EpochSample SampleEpoch(std::size_t epoch, bool training) const;
  // Loss for fixed stochastic inputs; fills `grad` (same shapes) when non-null.
  double Loss(const ModelParams& params, const EpochSample& sample, ModelParams* grad) const;
  // Pooled vertex embeddings with dropout off.
  Matrix Embeddings(const ModelParams& params) const;

  const ModelParams& params() const { return params_; }
  ModelParams& mutable_params() { return params_; }
  std::size_t epochs_done() const { return epoch_; }
  std::size_t negatives_last_epoch() const { return last_negatives_; }

 private:
  struct Forward;
  void RunForward(const ModelParams& params, const EpochSample* sample, Forward& fwd) const;
  void ProjectInputs(const Matrix& w1, Matrix& z1) const;
  void ProjectInputsBackward(const Matrix& dz1, Matrix& dw1) const;
  void AdamStep(const ModelParams& grad);

  const TrainingLayout* layout_;
  const Matrix* raw_;
  TaskMode mode_;
  TrainConfig config_;
  const SupervisedTask* supervised_;
  const LinkTask* link_;
  std::optional<NegativeSampler> sampler_;
  ModelParams params_;
  ModelParams adam_m_;
  ModelParams adam_v_;
  std::size_t epoch_ = 0;
  std::size_t last_negatives_ = 0;
};

struct TrainResult {
  std::vector<EpochMetrics> epochs;
  EvalMetrics final_metrics;
  // Metrics at the epoch with the best validation score.
  EvalMetrics best_validation;
  std::size_t best_epoch = 0;
  ModelParams params;
};

TrainResult TrainModel(Trainer& trainer, std::size_t epochs);

// Same two-layer GCN trained on the whole graph with raw features (on the
// training-edge graph in link mode).
TrainResult CentralizedBaseline(const GlobalGraph& graph, const SplitSpec& split,
                                const TrainConfig& config);

}  // namespace fedtree
