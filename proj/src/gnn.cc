#include "fedtree/gnn.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <thread>

#include "fedtree/error.h"

namespace fedtree {
namespace {

constexpr double kProbabilityFloor = 1e-12;
constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

template <typename Fn>
void ParallelRows(std::size_t rows, int threads, Fn&& fn) {
  const std::size_t workers =
      std::clamp<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), 1,
                              std::max<std::size_t>(rows / 1024, 1));
  if (workers <= 1) {
    fn(std::size_t{0}, rows);
    return;
  }
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] { fn(rows * w / workers, rows * (w + 1) / workers); });
  }
}

// log(1 + e^x) without overflow.
double Softplus(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double Sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Matrix GlorotUniform(std::size_t rows, std::size_t cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = (2.0 * UniformUnit(rng) - 1.0) * limit;
  return m;
}

std::uint64_t PairKey(VertexId sender, VertexId receiver) {
  return (static_cast<std::uint64_t>(receiver) << 32) | sender;
}

// Shared tail of the layout builders: turns per-node vertex tags into POOL
// groups.
void BuildPoolGroups(TrainingLayout& layout) {
  layout.pool_offsets.assign(layout.num_vertices + 1, 0);
  for (std::size_t n = 0; n < layout.num_nodes; ++n) {
    if (layout.vertex[n] != kVirtualNode) ++layout.pool_offsets[layout.vertex[n] + 1];
  }
  for (std::size_t u = 0; u < layout.num_vertices; ++u) {
    layout.pool_offsets[u + 1] += layout.pool_offsets[u];
  }
  layout.pool_nodes.resize(layout.pool_offsets.back());
  std::vector<std::size_t> cursor(layout.pool_offsets.begin(), layout.pool_offsets.end() - 1);
  for (std::size_t n = 0; n < layout.num_nodes; ++n) {
    if (layout.vertex[n] != kVirtualNode) layout.pool_nodes[cursor[layout.vertex[n]]++] = n;
  }
}

void AddNode(TrainingLayout& layout, FeatureSource source, std::uint32_t ref, VertexId owner,
             std::int64_t vertex) {
  layout.source.push_back(source);
  layout.input_ref.push_back(ref);
  layout.owner.push_back(owner);
  layout.vertex.push_back(vertex);
}

std::uint32_t RequireMessage(const FeatureExchange& exchange, VertexId sender, VertexId receiver) {
  const auto id = exchange.Find(sender, receiver);
  if (!id) {
    throw Error(ErrorCode::kMissingFeature, "device " + std::to_string(receiver) +
                                                " holds no recovered feature from " +
                                                std::to_string(sender));
  }
  return *id;
}

}  // namespace

// ---------------------------------------------------------------------------
// Parameters

ModelParams ModelParams::Init(std::size_t input_dim, std::size_t hidden_dim,
                              std::size_t num_classes, Rng& rng) {
  ModelParams p;
  p.w1 = GlorotUniform(input_dim, hidden_dim, rng);
  p.w2 = GlorotUniform(hidden_dim, hidden_dim, rng);
  if (num_classes > 0) {
    p.head_w = GlorotUniform(hidden_dim, num_classes, rng);
    p.head_b = Matrix::Zero(1, num_classes);
  }
  return p;
}

ModelParams ModelParams::ZerosLike(const ModelParams& other) {
  ModelParams p;
  p.w1 = Matrix::Zero(other.w1.rows(), other.w1.cols());
  p.w2 = Matrix::Zero(other.w2.rows(), other.w2.cols());
  p.head_w = Matrix::Zero(other.head_w.rows(), other.head_w.cols());
  p.head_b = Matrix::Zero(other.head_b.rows(), other.head_b.cols());
  return p;
}

std::vector<std::pair<std::string, Matrix*>> ModelParams::Tensors() {
  return {{"w1", &w1}, {"w2", &w2}, {"head_w", &head_w}, {"head_b", &head_b}};
}

std::vector<std::pair<std::string, const Matrix*>> ModelParams::Tensors() const {
  return {{"w1", &w1}, {"w2", &w2}, {"head_w", &head_w}, {"head_b", &head_b}};
}

bool ModelParams::AllFinite() const {
  for (const auto& [name, t] : Tensors()) {
    if (!t->allFinite()) return false;
  }
  return true;
}

void WriteCheckpoint(std::ostream& out, const ModelParams& params) {
  out << std::setprecision(17);
  for (const auto& [name, t] : params.Tensors()) {
    out << name << ' ' << t->rows() << ' ' << t->cols() << '\n';
    for (Eigen::Index r = 0; r < t->rows(); ++r) {
      for (Eigen::Index c = 0; c < t->cols(); ++c) out << (c ? "," : "") << (*t)(r, c);
      out << '\n';
    }
  }
}

ModelParams ReadCheckpoint(std::istream& in) {
  ModelParams p;
  auto tensors = p.Tensors();
  for (auto& [expected, t] : tensors) {
    std::string name;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    if (!(in >> name >> rows >> cols) || name != expected || rows < 0 || cols < 0) {
      throw Error(ErrorCode::kMalformedInput, "checkpoint: expected tensor '" + expected + "'");
    }
    in.ignore(std::numeric_limits<std::streamsize>::max(), '\n');
    t->resize(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      std::string line;
      std::getline(in, line);
      std::istringstream row(line);
      for (Eigen::Index c = 0; c < cols; ++c) {
        std::string cell;
        if (!std::getline(row, cell, ',')) {
          throw Error(ErrorCode::kMalformedInput, "checkpoint: short row in '" + expected + "'");
        }
        (*t)(r, c) = std::stod(cell);
      }
    }
  }
  return p;
}

// ---------------------------------------------------------------------------
// Propagation

NormalizedAdjacency::NormalizedAdjacency(const std::vector<std::vector<std::size_t>>& adjacency) {
  const std::size_t n = adjacency.size();
  std::vector<double> inv_sqrt(n);
  std::size_t nnz = 0;
  for (std::size_t i = 0; i < n; ++i) {
    inv_sqrt[i] = 1.0 / std::sqrt(static_cast<double>(adjacency[i].size() + 1));
    nnz += adjacency[i].size() + 1;
  }
  offsets_.reserve(n + 1);
  cols_.reserve(nnz);
  vals_.reserve(nnz);
  offsets_.push_back(0);
  for (std::size_t i = 0; i < n; ++i) {
    cols_.push_back(i);
    vals_.push_back(inv_sqrt[i] * inv_sqrt[i]);
    for (std::size_t j : adjacency[i]) {
      cols_.push_back(j);
      vals_.push_back(inv_sqrt[i] * inv_sqrt[j]);
    }
    offsets_.push_back(cols_.size());
  }
}

void NormalizedAdjacency::Multiply(const Matrix& in, Matrix& out, int threads) const {
  if (static_cast<std::size_t>(in.rows()) != rows()) {
    throw Error(ErrorCode::kShapeMismatch, "adjacency has " + std::to_string(rows()) +
                                               " rows, input has " + std::to_string(in.rows()));
  }
  out.resize(in.rows(), in.cols());
  ParallelRows(rows(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      auto row = out.row(static_cast<Eigen::Index>(i));
      row.setZero();
      for (std::size_t k = offsets_[i]; k < offsets_[i + 1]; ++k) {
        row.noalias() += vals_[k] * in.row(static_cast<Eigen::Index>(cols_[k]));
      }
    }
  });
}

double NormalizedAdjacency::coefficient(std::size_t row, std::size_t col) const {
  for (std::size_t k = offsets_[row]; k < offsets_[row + 1]; ++k) {
    if (cols_[k] == col) return vals_[k];
  }
  return 0.0;
}

Matrix GcnLayerForward(const NormalizedAdjacency& adjacency, const Matrix& h_in, const Matrix& w,
                       double dropout, Rng* rng) {
  if (h_in.cols() != w.rows()) {
    throw Error(ErrorCode::kShapeMismatch, "input width " + std::to_string(h_in.cols()) +
                                               " != weight rows " + std::to_string(w.rows()));
  }
  Matrix projected = h_in * w;
  Matrix out;
  adjacency.Multiply(projected, out);
  out = out.cwiseMax(0.0);
  if (dropout > 0.0 && rng != nullptr) {
    const double keep = 1.0 - dropout;
    for (Eigen::Index i = 0; i < out.size(); ++i) {
      out.data()[i] = UniformUnit(*rng) < dropout ? 0.0 : out.data()[i] / keep;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Layouts

std::uint32_t FeatureExchange::Add(VertexId sender, VertexId receiver, SparseRecovered recovered) {
  const auto id = static_cast<std::uint32_t>(messages_.size());
  if (!index_.emplace(PairKey(sender, receiver), id).second) {
    throw Error(ErrorCode::kInvalidArgument, "duplicate message " + std::to_string(sender) +
                                                 " -> " + std::to_string(receiver));
  }
  messages_.push_back(std::move(recovered));
  senders_.push_back(sender);
  receivers_.push_back(receiver);
  return id;
}

std::optional<std::uint32_t> FeatureExchange::Find(VertexId sender, VertexId receiver) const {
  const auto it = index_.find(PairKey(sender, receiver));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<VertexId> TrainingLayout::Orphans() const {
  std::vector<VertexId> out;
  for (VertexId u = 0; u < num_vertices; ++u) {
    if (pool_offsets[u] == pool_offsets[u + 1]) out.push_back(u);
  }
  return out;
}

std::size_t TrainingLayout::CrossDeviceCopies() const {
  std::size_t count = 0;
  for (std::size_t n = 0; n < num_nodes; ++n) {
    if (vertex[n] != kVirtualNode && static_cast<VertexId>(vertex[n]) != owner[n]) ++count;
  }
  return count;
}

TrainingLayout BuildTreeLayout(std::size_t num_vertices, std::span<const DeviceTree> trees,
                               const FeatureExchange& exchange) {
  TrainingLayout layout;
  layout.num_vertices = num_vertices;
  layout.exchange = &exchange;
  std::vector<std::vector<std::size_t>> adjacency;
  for (const auto& tree : trees) {
    if (tree.empty()) continue;
    const std::size_t base = adjacency.size();
    const VertexId center = tree.center();
    for (auto& list : TreeAdjacency(tree)) {
      for (auto& j : list) j += base;
      adjacency.push_back(std::move(list));
    }
    for (std::size_t i = 0; i < tree.num_nodes(); ++i) {
      const auto leaf = tree.leaf_vertex(i);
      if (!leaf) {
        AddNode(layout, FeatureSource::kNone, 0, center, kVirtualNode);
      } else if (*leaf == center) {
        AddNode(layout, FeatureSource::kRawOwn, center, center, center);
      } else {
        AddNode(layout, FeatureSource::kRecovered, RequireMessage(exchange, *leaf, center), center,
                *leaf);
      }
    }
  }
  layout.num_nodes = adjacency.size();
  layout.adjacency = NormalizedAdjacency(adjacency);
  BuildPoolGroups(layout);
  return layout;
}

TrainingLayout BuildEgoLayout(const NeighborSelection& selection, const FeatureExchange& exchange) {
  TrainingLayout layout;
  layout.num_vertices = selection.num_vertices();
  layout.exchange = &exchange;
  std::vector<std::vector<std::size_t>> adjacency;
  for (VertexId u = 0; u < selection.num_vertices(); ++u) {
    const auto retained = selection.retained(u);
    if (retained.empty()) continue;
    const std::size_t center = adjacency.size();
    adjacency.emplace_back();
    AddNode(layout, FeatureSource::kRawOwn, u, u, u);
    for (VertexId v : retained) {
      const std::size_t node = adjacency.size();
      adjacency.push_back({center});
      adjacency[center].push_back(node);
      AddNode(layout, FeatureSource::kRecovered, RequireMessage(exchange, v, u), u, v);
    }
  }
  layout.num_nodes = adjacency.size();
  layout.adjacency = NormalizedAdjacency(adjacency);
  BuildPoolGroups(layout);
  return layout;
}

TrainingLayout BuildCentralLayout(const GlobalGraph& graph) {
  TrainingLayout layout;
  layout.num_vertices = graph.num_vertices();
  layout.num_nodes = graph.num_vertices();
  std::vector<std::vector<std::size_t>> adjacency(graph.num_vertices());
  for (VertexId u = 0; u < graph.num_vertices(); ++u) {
    for (VertexId v : graph.neighbors(u)) adjacency[u].push_back(v);
    AddNode(layout, FeatureSource::kRawOwn, u, u, u);
  }
  layout.adjacency = NormalizedAdjacency(adjacency);
  BuildPoolGroups(layout);
  return layout;
}

void ValidateProvenance(const TrainingLayout& layout) {
  for (std::size_t n = 0; n < layout.num_nodes; ++n) {
    switch (layout.source[n]) {
      case FeatureSource::kNone:
        if (layout.vertex[n] != kVirtualNode) {
          throw Error(ErrorCode::kInvalidArgument, "leaf node without a feature source");
        }
        break;
      case FeatureSource::kRawOwn:
        if (layout.input_ref[n] != layout.owner[n] ||
            layout.vertex[n] != static_cast<std::int64_t>(layout.owner[n])) {
          throw Error(ErrorCode::kInvalidArgument,
                      "raw feature of " + std::to_string(layout.input_ref[n]) +
                          " used on device " + std::to_string(layout.owner[n]));
        }
        break;
      case FeatureSource::kRecovered: {
        if (layout.exchange == nullptr) {
          throw Error(ErrorCode::kInvalidArgument, "recovered input without an exchange");
        }
        const auto id = layout.input_ref[n];
        if (layout.exchange->receiver(id) != layout.owner[n] ||
            static_cast<std::int64_t>(layout.exchange->sender(id)) != layout.vertex[n]) {
          throw Error(ErrorCode::kInvalidArgument, "recovered feature used off its receiver");
        }
        break;
      }
    }
  }
}

Matrix PoolLeafEmbeddings(const TrainingLayout& layout, const Matrix& node_embeddings) {
  Matrix pooled = Matrix::Zero(static_cast<Eigen::Index>(layout.num_vertices),
                               node_embeddings.cols());
  for (VertexId u = 0; u < layout.num_vertices; ++u) {
    const auto group = layout.pool_group(u);
    if (group.empty()) continue;
    auto row = pooled.row(u);
    for (std::size_t n : group) row += node_embeddings.row(static_cast<Eigen::Index>(n));
    row /= static_cast<double>(group.size());
  }
  return pooled;
}

// ---------------------------------------------------------------------------
// Losses and metrics

int LocalLabels::Read(VertexId device, VertexId vertex) const {
  if (device != vertex) {
    throw Error(ErrorCode::kInvalidArgument, "device " + std::to_string(device) +
                                                 " attempted to read the label of " +
                                                 std::to_string(vertex));
  }
  return labels_.at(vertex);
}

double SupervisedLoss(const Matrix& logits, const LocalLabels& labels,
                      std::span<const VertexId> vertices, Matrix* grad_logits) {
  if (grad_logits != nullptr) grad_logits->setZero(logits.rows(), logits.cols());
  if (vertices.empty()) return 0.0;
  const double scale = 1.0 / static_cast<double>(vertices.size());
  const double cap = -std::log(kProbabilityFloor);
  double total = 0.0;
  for (VertexId u : vertices) {
    const int y = labels.Read(u, u);
    const auto z = logits.row(u);
    const double zmax = z.maxCoeff();
    const double lse = zmax + std::log((z.array() - zmax).exp().sum());
    const double nll = lse - z(y);
    total += std::min(nll, cap);
    if (grad_logits != nullptr && nll < cap) {
      auto g = grad_logits->row(u);
      g = ((z.array() - lse).exp() * scale).matrix();
      g(y) -= scale;
    }
  }
  return total * scale;
}

double UnsupervisedLoss(const Matrix& embeddings, std::span<const DevicePair> positives,
                        std::span<const DevicePair> negatives, Matrix* grad_embeddings) {
  std::vector<char> active(static_cast<std::size_t>(embeddings.rows()), 0);
  for (const auto& p : positives) active[p.device] = 1;
  for (const auto& p : negatives) active[p.device] = 1;
  const auto devices = std::count(active.begin(), active.end(), 1);
  if (grad_embeddings != nullptr) grad_embeddings->setZero(embeddings.rows(), embeddings.cols());
  if (devices == 0) return 0.0;
  const double scale = 1.0 / static_cast<double>(devices);

  double total = 0.0;
  auto accumulate = [&](const DevicePair& p, double sign) {
    // sign = +1 for positives: -log sig(s); sign = -1 for negatives: -log sig(-s).
    const auto hu = embeddings.row(p.device);
    const auto hv = embeddings.row(p.other);
    const double s = hu.dot(hv);
    total += Softplus(-sign * s);
    if (grad_embeddings != nullptr) {
      const double g = -sign * Sigmoid(-sign * s) * scale;
      grad_embeddings->row(p.device) += g * hv;
      grad_embeddings->row(p.other) += g * hu;
    }
  };
  for (const auto& p : positives) accumulate(p, 1.0);
  for (const auto& p : negatives) accumulate(p, -1.0);
  return total * scale;
}

std::optional<VertexId> NegativeSampler::Sample(VertexId u, Rng& rng) const {
  const std::size_t n = graph_->num_vertices();
  if (n < 2 || graph_->degree(u) + 1 >= n) return std::nullopt;
  while (true) {
    const auto v = static_cast<VertexId>(UniformInt(rng, 0, n - 1));
    if (v != u && !graph_->has_edge(u, v)) return v;
  }
}

double Accuracy(const Matrix& logits, const std::vector<int>& labels,
                std::span<const VertexId> vertices) {
  if (vertices.empty()) return 0.0;
  std::size_t correct = 0;
  for (VertexId u : vertices) {
    Eigen::Index best = 0;
    logits.row(u).maxCoeff(&best);
    if (best == labels[u]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(vertices.size());
}

double RocAuc(std::span<const double> positive_scores, std::span<const double> negative_scores) {
  if (positive_scores.empty() || negative_scores.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "ROC-AUC needs both positives and negatives");
  }
  std::vector<std::pair<double, bool>> scored;
  scored.reserve(positive_scores.size() + negative_scores.size());
  for (double s : positive_scores) scored.emplace_back(s, true);
  for (double s : negative_scores) scored.emplace_back(s, false);
  std::sort(scored.begin(), scored.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  double positive_rank_sum = 0.0;
  for (std::size_t i = 0; i < scored.size();) {
    std::size_t j = i;
    while (j < scored.size() && scored[j].first == scored[i].first) ++j;
    const double average_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
    for (std::size_t k = i; k < j; ++k) {
      if (scored[k].second) positive_rank_sum += average_rank;
    }
    i = j;
  }
  const double np = static_cast<double>(positive_scores.size());
  const double nn = static_cast<double>(negative_scores.size());
  return (positive_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

// ---------------------------------------------------------------------------
// Tasks

SupervisedTask MakeSupervisedTask(const GlobalGraph& graph, const SplitSpec& split) {
  if (split.mode != SplitMode::kSupervised || split.membership.size() != graph.num_vertices()) {
    throw Error(ErrorCode::kInvalidArgument, "supervised task needs a vertex split");
  }
  if (graph.labels().size() != graph.num_vertices()) {
    throw Error(ErrorCode::kInvalidArgument, "supervised task needs labels");
  }
  SupervisedTask task;
  task.labels = LocalLabels(graph.labels());
  task.truth = graph.labels();
  task.num_classes = static_cast<std::size_t>(graph.num_classes());
  for (VertexId u = 0; u < graph.num_vertices(); ++u) {
    switch (split.membership[u]) {
      case SplitPart::kTrain: task.train.push_back(u); break;
      case SplitPart::kValidation: task.validation.push_back(u); break;
      case SplitPart::kTest: task.test.push_back(u); break;
    }
  }
  return task;
}

std::vector<Edge> TrainingEdges(const GlobalGraph& graph, const SplitSpec& split) {
  if (split.mode != SplitMode::kUnsupervised || split.membership.size() != graph.num_edges()) {
    throw Error(ErrorCode::kInvalidArgument, "link task needs an edge split");
  }
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < graph.num_edges(); ++i) {
    if (split.membership[i] == SplitPart::kTrain) edges.push_back(graph.edges()[i]);
  }
  return edges;
}

LinkTask MakeLinkTask(const GlobalGraph& full_graph, const SplitSpec& split,
                      const NeighborSelection& selection, std::uint64_t seed) {
  if (split.mode != SplitMode::kUnsupervised || split.membership.size() != full_graph.num_edges()) {
    throw Error(ErrorCode::kInvalidArgument, "link task needs an edge split");
  }
  const auto edges = full_graph.edges();
  auto part_of = [&](VertexId u, VertexId v) {
    const Edge e{std::min(u, v), std::max(u, v)};
    const auto it = std::lower_bound(edges.begin(), edges.end(), e);
    if (it == edges.end() || *it != e) {
      throw Error(ErrorCode::kInvalidArgument, "selection holds a non-edge");
    }
    return split.membership[static_cast<std::size_t>(it - edges.begin())];
  };

  LinkTask task;
  task.full_graph = &full_graph;
  for (VertexId u = 0; u < selection.num_vertices(); ++u) {
    for (VertexId v : selection.retained(u)) {
      if (part_of(u, v) == SplitPart::kTrain) task.train_positives.push_back({u, v});
    }
  }
  auto rng = MakeStream(seed, "link/eval-negatives");
  const std::size_t n = full_graph.num_vertices();
  auto sample_non_edge = [&]() {
    while (true) {
      const auto u = static_cast<VertexId>(UniformInt(rng, 0, n - 1));
      const auto v = static_cast<VertexId>(UniformInt(rng, 0, n - 1));
      if (u != v && !full_graph.has_edge(u, v)) return DevicePair{u, v};
    }
  };
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const DevicePair pair{edges[i].first, edges[i].second};
    if (split.membership[i] == SplitPart::kValidation) task.validation_positives.push_back(pair);
    if (split.membership[i] == SplitPart::kTest) task.test_positives.push_back(pair);
  }
  for (std::size_t i = 0; i < task.validation_positives.size(); ++i) {
    task.validation_negatives.push_back(sample_non_edge());
  }
  for (std::size_t i = 0; i < task.test_positives.size(); ++i) {
    task.test_negatives.push_back(sample_non_edge());
  }
  return task;
}

// ---------------------------------------------------------------------------
// Trainer

struct Trainer::Forward {
  Matrix z1;
  Matrix p1;
  Matrix d1;
  Matrix z2;
  Matrix p2;
  Matrix d2;
  Matrix pooled;
  Matrix logits;
};

Trainer::Trainer(const TrainingLayout& layout, const Matrix& raw_features, TaskMode mode,
                 const TrainConfig& config, const SupervisedTask* supervised, const LinkTask* link)
    : layout_(&layout),
      raw_(&raw_features),
      mode_(mode),
      config_(config),
      supervised_(supervised),
      link_(link) {
  if (mode_ == TaskMode::kSupervised && supervised_ == nullptr) {
    throw Error(ErrorCode::kInvalidArgument, "supervised mode needs a supervised task");
  }
  if (mode_ == TaskMode::kUnsupervised && (link_ == nullptr || link_->full_graph == nullptr)) {
    throw Error(ErrorCode::kInvalidArgument, "unsupervised mode needs a link task");
  }
  if (static_cast<std::size_t>(raw_features.rows()) != layout.num_vertices) {
    throw Error(ErrorCode::kShapeMismatch, "feature rows do not match vertex count");
  }
  if (!(config_.dropout >= 0.0 && config_.dropout < 1.0) || config_.hidden_dim == 0 ||
      !(config_.learning_rate >= 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "invalid training configuration");
  }
  ValidateProvenance(layout);
  if (mode_ == TaskMode::kUnsupervised) sampler_.emplace(*link_->full_graph);
  auto init_rng = MakeStream(config_.seed, "model/init");
  const std::size_t classes = mode_ == TaskMode::kSupervised ? supervised_->num_classes : 0;
  params_ = ModelParams::Init(static_cast<std::size_t>(raw_features.cols()), config_.hidden_dim,
                              classes, init_rng);
  adam_m_ = ModelParams::ZerosLike(params_);
  adam_v_ = ModelParams::ZerosLike(params_);
}

void Trainer::ProjectInputs(const Matrix& w1, Matrix& z1) const {
  const auto& layout = *layout_;
  const Matrix raw_projected = (*raw_) * w1;
  const Eigen::RowVectorXd column_sums = w1.colwise().sum();
  z1.resize(static_cast<Eigen::Index>(layout.num_nodes), w1.cols());
  ParallelRows(layout.num_nodes, config_.threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t n = begin; n < end; ++n) {
      auto row = z1.row(static_cast<Eigen::Index>(n));
      switch (layout.source[n]) {
        case FeatureSource::kNone: row.setZero(); break;
        case FeatureSource::kRawOwn: row = raw_projected.row(layout.input_ref[n]); break;
        case FeatureSource::kRecovered: {
          const auto& msg = layout.exchange->message(layout.input_ref[n]);
          row = msg.base * column_sums;
          for (std::size_t j = 0; j < msg.index.size(); ++j) {
            row.noalias() += msg.offset[j] * w1.row(msg.index[j]);
          }
          break;
        }
      }
    }
  });
}

void Trainer::ProjectInputsBackward(const Matrix& dz1, Matrix& dw1) const {
  const auto& layout = *layout_;
  Matrix per_vertex = Matrix::Zero(raw_->rows(), dz1.cols());
  Eigen::RowVectorXd base_sum = Eigen::RowVectorXd::Zero(dz1.cols());
  dw1 = Matrix::Zero(raw_->cols(), dz1.cols());
  for (std::size_t n = 0; n < layout.num_nodes; ++n) {
    const auto g = dz1.row(static_cast<Eigen::Index>(n));
    switch (layout.source[n]) {
      case FeatureSource::kNone: break;
      case FeatureSource::kRawOwn: per_vertex.row(layout.input_ref[n]) += g; break;
      case FeatureSource::kRecovered: {
        const auto& msg = layout.exchange->message(layout.input_ref[n]);
        base_sum += msg.base * g;
        for (std::size_t j = 0; j < msg.index.size(); ++j) {
          dw1.row(msg.index[j]) += msg.offset[j] * g;
        }
        break;
      }
    }
  }
  dw1.noalias() += raw_->transpose() * per_vertex;
  dw1.rowwise() += base_sum;
}

EpochSample Trainer::SampleEpoch(std::size_t epoch, bool training) const {
  EpochSample sample;
  const auto nodes = static_cast<Eigen::Index>(layout_->num_nodes);
  const auto h = static_cast<Eigen::Index>(config_.hidden_dim);
  if (training && config_.dropout > 0.0) {
    auto rng = MakeStream(config_.seed, "train/dropout", epoch);
    const double keep = 1.0 / (1.0 - config_.dropout);
    for (Matrix* mask : {&sample.mask1, &sample.mask2}) {
      mask->resize(nodes, h);
      for (Eigen::Index i = 0; i < mask->size(); ++i) {
        mask->data()[i] = UniformUnit(rng) < config_.dropout ? 0.0 : keep;
      }
    }
  }
  if (mode_ == TaskMode::kUnsupervised) {
    auto rng = MakeStream(config_.seed, "train/negatives", epoch);
    sample.negatives.reserve(link_->train_positives.size() * config_.neg_per_positive);
    for (const auto& p : link_->train_positives) {
      for (std::size_t k = 0; k < config_.neg_per_positive; ++k) {
        if (const auto v = sampler_->Sample(p.device, rng)) sample.negatives.push_back({p.device, *v});
      }
    }
  }
  return sample;
}

void Trainer::RunForward(const ModelParams& params, const EpochSample* sample, Forward& fwd) const {
  const auto& adjacency = layout_->adjacency;
  ProjectInputs(params.w1, fwd.z1);
  adjacency.Multiply(fwd.z1, fwd.p1, config_.threads);
  fwd.d1 = fwd.p1.cwiseMax(0.0);
  if (sample != nullptr && sample->mask1.size() > 0) fwd.d1 = fwd.d1.cwiseProduct(sample->mask1);
  fwd.z2.noalias() = fwd.d1 * params.w2;
  adjacency.Multiply(fwd.z2, fwd.p2, config_.threads);
  fwd.d2 = fwd.p2.cwiseMax(0.0);
  if (sample != nullptr && sample->mask2.size() > 0) fwd.d2 = fwd.d2.cwiseProduct(sample->mask2);
  fwd.pooled = PoolLeafEmbeddings(*layout_, fwd.d2);
  if (mode_ == TaskMode::kSupervised) {
    fwd.logits = fwd.pooled * params.head_w;
    fwd.logits.rowwise() += params.head_b.row(0);
  }
}

double Trainer::Loss(const ModelParams& params, const EpochSample& sample, ModelParams* grad) const {
  Forward fwd;
  RunForward(params, &sample, fwd);

  Matrix d_pooled;
  double loss = 0.0;
  if (mode_ == TaskMode::kSupervised) {
    Matrix d_logits;
    loss = SupervisedLoss(fwd.logits, supervised_->labels, supervised_->train,
                          grad ? &d_logits : nullptr);
    if (grad == nullptr) return loss;
    grad->head_w.noalias() = fwd.pooled.transpose() * d_logits;
    grad->head_b = d_logits.colwise().sum();
    d_pooled.noalias() = d_logits * params.head_w.transpose();
  } else {
    loss = UnsupervisedLoss(fwd.pooled, link_->train_positives, sample.negatives,
                            grad ? &d_pooled : nullptr);
    if (grad == nullptr) return loss;
    grad->head_w.resize(0, 0);
    grad->head_b.resize(0, 0);
  }

  // POOL: each copy receives an equal share of its vertex's gradient.
  Matrix d_d2 = Matrix::Zero(fwd.d2.rows(), fwd.d2.cols());
  for (VertexId u = 0; u < layout_->num_vertices; ++u) {
    const auto group = layout_->pool_group(u);
    if (group.empty()) continue;
    const auto share = d_pooled.row(u) / static_cast<double>(group.size());
    for (std::size_t n : group) d_d2.row(static_cast<Eigen::Index>(n)) = share;
  }
  Matrix d_p2 = d_d2;
  if (sample.mask2.size() > 0) d_p2 = d_p2.cwiseProduct(sample.mask2);
  d_p2 = (fwd.p2.array() > 0.0).select(d_p2, 0.0);
  Matrix d_z2;
  layout_->adjacency.Multiply(d_p2, d_z2, config_.threads);
  grad->w2.noalias() = fwd.d1.transpose() * d_z2;
  Matrix d_p1 = d_z2 * params.w2.transpose();
  if (sample.mask1.size() > 0) d_p1 = d_p1.cwiseProduct(sample.mask1);
  d_p1 = (fwd.p1.array() > 0.0).select(d_p1, 0.0);
  Matrix d_z1;
  layout_->adjacency.Multiply(d_p1, d_z1, config_.threads);
  ProjectInputsBackward(d_z1, grad->w1);
  return loss;
}

Matrix Trainer::Embeddings(const ModelParams& params) const {
  Forward fwd;
  RunForward(params, nullptr, fwd);
  return fwd.pooled;
}

void Trainer::AdamStep(const ModelParams& grad) {
  const double t = static_cast<double>(epoch_ + 1);
  const double c1 = 1.0 - std::pow(kAdamBeta1, t);
  const double c2 = 1.0 - std::pow(kAdamBeta2, t);
  auto params = params_.Tensors();
  auto ms = adam_m_.Tensors();
  auto vs = adam_v_.Tensors();
  const auto grads = grad.Tensors();
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& p = *params[i].second;
    if (p.size() == 0) continue;
    Matrix& m = *ms[i].second;
    Matrix& v = *vs[i].second;
    const Matrix& g = *grads[i].second;
    m = kAdamBeta1 * m + (1.0 - kAdamBeta1) * g;
    v = kAdamBeta2 * v + (1.0 - kAdamBeta2) * g.cwiseProduct(g);
    p.array() -= config_.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + kAdamEps);
  }
}

EpochMetrics Trainer::TrainEpoch() {
  const auto start = std::chrono::steady_clock::now();
  const EpochSample sample = SampleEpoch(epoch_, true);
  last_negatives_ = sample.negatives.size();
  ModelParams grad = ModelParams::ZerosLike(params_);
  const double loss = Loss(params_, sample, &grad);
  if (!std::isfinite(loss) || !grad.AllFinite()) {
    throw Error(ErrorCode::kNonFiniteLoss, "non-finite loss at epoch " + std::to_string(epoch_));
  }
  AdamStep(grad);
  const auto eval = Evaluate();
  EpochMetrics metrics;
  metrics.epoch = epoch_;
  metrics.loss = loss;
  metrics.train_metric = eval.train;
  metrics.val_metric = eval.validation;
  metrics.test_metric = eval.test;
  ++epoch_;
  metrics.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return metrics;
}

EvalMetrics Trainer::Evaluate() const {
  Forward fwd;
  RunForward(params_, nullptr, fwd);
  EvalMetrics out;
  if (mode_ == TaskMode::kSupervised) {
    out.train = Accuracy(fwd.logits, supervised_->truth, supervised_->train);
    out.validation = Accuracy(fwd.logits, supervised_->truth, supervised_->validation);
    out.test = Accuracy(fwd.logits, supervised_->truth, supervised_->test);
    return out;
  }
  auto scores = [&](std::span<const DevicePair> pairs) {
    std::vector<double> s;
    s.reserve(pairs.size());
    for (const auto& p : pairs) s.push_back(fwd.pooled.row(p.device).dot(fwd.pooled.row(p.other)));
    return s;
  };
  auto auc = [&](std::span<const DevicePair> pos, std::span<const DevicePair> neg) {
    if (pos.empty() || neg.empty()) return 0.0;
    return RocAuc(scores(pos), scores(neg));
  };
  // Training AUC compares training positives against the same number of
  // fixed non-edges drawn for evaluation.
  std::vector<DevicePair> train_neg;
  {
    auto rng = MakeStream(config_.seed, "eval/train-negatives");
    for (const auto& p : link_->train_positives) {
      if (const auto v = sampler_->Sample(p.device, rng)) train_neg.push_back({p.device, *v});
    }
  }
  out.train = auc(link_->train_positives, train_neg);
  out.validation = auc(link_->validation_positives, link_->validation_negatives);
  out.test = auc(link_->test_positives, link_->test_negatives);
  return out;
}

TrainResult TrainModel(Trainer& trainer, std::size_t epochs) {
  TrainResult result;
  result.epochs.reserve(epochs);
  double best_val = -std::numeric_limits<double>::infinity();
  for (std::size_t e = 0; e < epochs; ++e) {
    const auto m = trainer.TrainEpoch();
    result.epochs.push_back(m);
    if (m.val_metric > best_val) {
      best_val = m.val_metric;
      result.best_epoch = m.epoch;
      result.best_validation = {m.train_metric, m.val_metric, m.test_metric};
    }
  }
  result.final_metrics = trainer.Evaluate();
  if (epochs == 0) result.best_validation = result.final_metrics;
  result.params = trainer.params();
  return result;
}

TrainResult CentralizedBaseline(const GlobalGraph& graph, const SplitSpec& split,
                                const TrainConfig& config) {
  if (config.mode == TaskMode::kSupervised) {
    const auto layout = BuildCentralLayout(graph);
    const auto task = MakeSupervisedTask(graph, split);
    Trainer trainer(layout, graph.features(), config.mode, config, &task, nullptr);
    return TrainModel(trainer, config.epochs);
  }
  const auto train_graph = graph.WithEdges(TrainingEdges(graph, split));
  const auto layout = BuildCentralLayout(train_graph);
  const auto task = MakeLinkTask(graph, split, FullSelection(train_graph), config.seed);
  Trainer trainer(layout, graph.features(), config.mode, config, nullptr, &task);
  return TrainModel(trainer, config.epochs);
}

}  // namespace fedtree
