#include "fedtree/graph.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>
#include <string_view>

#include "fedtree/error.h"
#include "fedtree/rng.h"

namespace fedtree {
namespace {

std::vector<std::string> ReadLines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  while (!lines.empty() && lines.back().find_first_not_of(" \t") == std::string::npos) {
    lines.pop_back();
  }
  return lines;
}

std::string_view Trim(std::string_view s) {
  const auto begin = s.find_first_not_of(" \t");
  if (begin == std::string_view::npos) return {};
  const auto end = s.find_last_not_of(" \t");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string_view> SplitFields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    fields.push_back(Trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

template <typename T>
T ParseNumber(std::string_view field, const std::filesystem::path& path, std::size_t line_no) {
  T value{};
  const auto* end = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (field.empty() || ec != std::errc() || ptr != end) {
    throw Error(ErrorCode::kMalformedInput, path.string() + ":" + std::to_string(line_no) +
                                                ": cannot parse '" + std::string(field) + "'");
  }
  return value;
}

std::vector<Edge> ParseEdges(const std::filesystem::path& path) {
  const auto lines = ReadLines(path);
  if (lines.empty()) throw Error(ErrorCode::kMalformedInput, path.string() + ": no edges");
  std::vector<Edge> edges;
  edges.reserve(lines.size());
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto fields = SplitFields(lines[i]);
    if (fields.size() != 2) {
      throw Error(ErrorCode::kMalformedInput,
                  path.string() + ":" + std::to_string(i + 1) + ": expected 'u,v'");
    }
    const auto u = ParseNumber<VertexId>(fields[0], path, i + 1);
    const auto v = ParseNumber<VertexId>(fields[1], path, i + 1);
    edges.push_back({std::min(u, v), std::max(u, v)});
  }
  return edges;
}

}  // namespace

GlobalGraph GlobalGraph::Create(std::size_t num_vertices, std::vector<Edge> edges,
                                Matrix features, std::vector<int> labels, FeatureBounds bounds) {
  if (!(bounds.lower < bounds.upper)) {
    throw Error(ErrorCode::kInvalidArgument, "feature bounds require lower < upper");
  }
  if (features.size() > 0 && static_cast<std::size_t>(features.rows()) != num_vertices) {
    throw Error(ErrorCode::kInconsistentDimensions,
                "feature rows (" + std::to_string(features.rows()) + ") != vertex count (" +
                    std::to_string(num_vertices) + ")");
  }
  if (!labels.empty() && labels.size() != num_vertices) {
    throw Error(ErrorCode::kInconsistentDimensions,
                "label count (" + std::to_string(labels.size()) + ") != vertex count (" +
                    std::to_string(num_vertices) + ")");
  }
  for (auto& e : edges) {
    if (e.first == e.second) {
      throw Error(ErrorCode::kMalformedInput, "self-loop at vertex " + std::to_string(e.first));
    }
    if (e.first > e.second) std::swap(e.first, e.second);
    if (e.second >= num_vertices) {
      throw Error(ErrorCode::kMalformedInput,
                  "edge references vertex " + std::to_string(e.second) + " >= " +
                      std::to_string(num_vertices));
    }
  }
  std::sort(edges.begin(), edges.end());
  if (const auto dup = std::adjacent_find(edges.begin(), edges.end()); dup != edges.end()) {
    throw Error(ErrorCode::kMalformedInput, "duplicate edge " + std::to_string(dup->first) +
                                                "," + std::to_string(dup->second));
  }
  for (Eigen::Index i = 0; i < features.size(); ++i) {
    const double x = features.data()[i];
    if (!(x >= bounds.lower && x <= bounds.upper)) {
      throw Error(ErrorCode::kOutOfBounds, "feature value " + std::to_string(x) +
                                               " outside [" + std::to_string(bounds.lower) +
                                               ", " + std::to_string(bounds.upper) + "]");
    }
  }
  int num_classes = 0;
  for (int label : labels) {
    if (label < 0) throw Error(ErrorCode::kMalformedInput, "negative label");
    num_classes = std::max(num_classes, label + 1);
  }

  GlobalGraph g;
  g.offsets_.assign(num_vertices + 1, 0);
  for (const auto& e : edges) {
    ++g.offsets_[e.first + 1];
    ++g.offsets_[e.second + 1];
  }
  std::partial_sum(g.offsets_.begin(), g.offsets_.end(), g.offsets_.begin());
  g.adjacency_.resize(2 * edges.size());
  std::vector<std::size_t> cursor(g.offsets_.begin(), g.offsets_.end() - 1);
  for (const auto& e : edges) {
    g.adjacency_[cursor[e.first]++] = e.second;
    g.adjacency_[cursor[e.second]++] = e.first;
  }
  for (std::size_t u = 0; u < num_vertices; ++u) {
    std::sort(g.adjacency_.begin() + g.offsets_[u], g.adjacency_.begin() + g.offsets_[u + 1]);
  }
  g.edges_ = std::move(edges);
  g.features_ = std::move(features);
  if (g.features_.rows() == 0) g.features_.resize(num_vertices, 0);
  g.labels_ = std::move(labels);
  g.num_classes_ = num_classes;
  g.bounds_ = bounds;
  return g;
}

GlobalGraph GlobalGraph::FromEdges(std::size_t num_vertices, std::vector<Edge> edges) {
  return Create(num_vertices, std::move(edges), Matrix(num_vertices, 0), {});
}

std::size_t GlobalGraph::max_degree() const {
  std::size_t best = 0;
  for (std::size_t u = 0; u < num_vertices(); ++u) best = std::max(best, degree(u));
  return best;
}

bool GlobalGraph::has_edge(VertexId u, VertexId v) const {
  const auto adj = neighbors(u);
  return std::binary_search(adj.begin(), adj.end(), v);
}

GlobalGraph GlobalGraph::WithEdges(std::vector<Edge> edges) const {
  return Create(num_vertices(), std::move(edges), features_, labels_, bounds_);
}

void RescaleFeatures(Matrix& features, const FeatureBounds& bounds) {
  for (Eigen::Index c = 0; c < features.cols(); ++c) {
    auto col = features.col(c);
    const double lo = col.minCoeff();
    const double hi = col.maxCoeff();
    if (hi > lo) {
      col = ((col.array() - lo) / (hi - lo) * bounds.width() + bounds.lower).matrix();
      // Guard against rounding just past the bounds.
      col = col.cwiseMax(bounds.lower).cwiseMin(bounds.upper);
    } else {
      col.setConstant(bounds.lower);
    }
  }
}

GlobalGraph LoadGraph(const std::filesystem::path& edge_path,
                      const std::filesystem::path& feature_path,
                      const std::filesystem::path& label_path, const LoadOptions& options) {
  auto edges = ParseEdges(edge_path);

  const auto feature_lines = ReadLines(feature_path);
  if (feature_lines.empty()) {
    throw Error(ErrorCode::kMalformedInput, feature_path.string() + ": no feature rows");
  }
  const std::size_t n = feature_lines.size();
  const std::size_t d = SplitFields(feature_lines[0]).size();
  Matrix features(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto fields = SplitFields(feature_lines[i]);
    if (fields.size() != d) {
      throw Error(ErrorCode::kInconsistentDimensions,
                  feature_path.string() + ":" + std::to_string(i + 1) + ": expected " +
                      std::to_string(d) + " values, found " + std::to_string(fields.size()));
    }
    for (std::size_t j = 0; j < d; ++j) {
      const double x = ParseNumber<double>(fields[j], feature_path, i + 1);
      if (!std::isfinite(x)) {
        throw Error(ErrorCode::kMalformedInput,
                    feature_path.string() + ":" + std::to_string(i + 1) + ": non-finite value");
      }
      features(i, j) = x;
    }
  }
  if (options.rescale) RescaleFeatures(features, options.bounds);

  std::vector<int> labels;
  if (label_path.empty()) {
    return GlobalGraph::Create(n, std::move(edges), std::move(features), std::move(labels),
                               options.bounds);
  }
  const auto label_lines = ReadLines(label_path);
  labels.reserve(label_lines.size());
  for (std::size_t i = 0; i < label_lines.size(); ++i) {
    const auto fields = SplitFields(label_lines[i]);
    if (fields.size() != 1) {
      throw Error(ErrorCode::kMalformedInput,
                  label_path.string() + ":" + std::to_string(i + 1) + ": expected one label");
    }
    labels.push_back(ParseNumber<int>(fields[0], label_path, i + 1));
  }
  return GlobalGraph::Create(n, std::move(edges), std::move(features), std::move(labels),
                             options.bounds);
}

GlobalGraph LoadEdgeList(const std::filesystem::path& edge_path) {
  auto edges = ParseEdges(edge_path);
  VertexId max_id = 0;
  for (const auto& e : edges) max_id = std::max(max_id, e.second);
  return GlobalGraph::FromEdges(static_cast<std::size_t>(max_id) + 1, std::move(edges));
}

std::vector<EgoNetwork> SplitEgoNetworks(const GlobalGraph& graph) {
  std::vector<EgoNetwork> egos(graph.num_vertices());
  for (VertexId u = 0; u < graph.num_vertices(); ++u) {
    auto& ego = egos[u];
    ego.center = u;
    const auto adj = graph.neighbors(u);
    ego.neighbors.assign(adj.begin(), adj.end());
    ego.center_feature = graph.features().row(u).transpose();
    ego.center_label = graph.labels().empty() ? -1 : graph.labels()[u];
  }
  return egos;
}

std::size_t SplitSpec::count(SplitPart part) const {
  return static_cast<std::size_t>(std::count(membership.begin(), membership.end(), part));
}

std::vector<std::size_t> SplitSpec::members(SplitPart part) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < membership.size(); ++i) {
    if (membership[i] == part) out.push_back(i);
  }
  return out;
}

std::array<std::size_t, 3> SplitSizes(std::size_t universe, const SplitRatios& ratios) {
  const std::array<double, 3> r = {ratios.train, ratios.validation, ratios.test};
  for (double x : r) {
    if (!(x >= 0.0)) throw Error(ErrorCode::kBadRatios, "split ratios must be non-negative");
  }
  if (std::abs(r[0] + r[1] + r[2] - 1.0) > 1e-9) {
    throw Error(ErrorCode::kBadRatios, "split ratios must sum to 1");
  }
  std::array<std::size_t, 3> sizes{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const double exact = r[i] * static_cast<double>(universe);
    sizes[i] = static_cast<std::size_t>(std::floor(exact));
    remainder[i] = exact - std::floor(exact);
    assigned += sizes[i];
  }
  std::array<int, 3> order = {0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return remainder[a] > remainder[b]; });
  for (std::size_t k = 0; assigned < universe; ++k, ++assigned) ++sizes[order[k % 3]];
  return sizes;
}

SplitSpec MakeSplit(const GlobalGraph& graph, SplitMode mode, const SplitRatios& ratios,
                    std::uint64_t seed) {
  const std::size_t universe =
      mode == SplitMode::kSupervised ? graph.num_vertices() : graph.num_edges();
  const auto sizes = SplitSizes(universe, ratios);

  std::vector<std::size_t> order(universe);
  std::iota(order.begin(), order.end(), 0);
  auto rng = MakeStream(seed, mode == SplitMode::kSupervised ? "split/vertices" : "split/edges");
  for (std::size_t i = universe; i > 1; --i) {
    std::swap(order[i - 1], order[UniformInt(rng, 0, i - 1)]);
  }

  SplitSpec spec;
  spec.mode = mode;
  spec.seed = seed;
  spec.membership.assign(universe, SplitPart::kTrain);
  for (std::size_t k = sizes[0]; k < sizes[0] + sizes[1]; ++k) {
    spec.membership[order[k]] = SplitPart::kValidation;
  }
  for (std::size_t k = sizes[0] + sizes[1]; k < universe; ++k) {
    spec.membership[order[k]] = SplitPart::kTest;
  }
  return spec;
}

}  // namespace fedtree
