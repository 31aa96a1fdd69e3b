#include "support/synthetic.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <set>
#include <vector>

namespace fedtree::testing {
namespace {

// Inverse-CDF draw from a discrete distribution given its prefix sums.
std::size_t DrawWeighted(const std::vector<double>& prefix, Rng& rng) {
  const double r = UniformUnit(rng) * prefix.back();
  const auto it = std::upper_bound(prefix.begin(), prefix.end(), r);
  return std::min<std::size_t>(static_cast<std::size_t>(it - prefix.begin()), prefix.size() - 1);
}

}  // namespace

GlobalGraph MakeSyntheticGraph(const SyntheticSpec& spec) {
  auto rng = MakeStream(spec.seed, "synthetic");
  const std::size_t n = spec.num_vertices;
  const std::size_t classes = spec.num_classes;

  std::vector<int> labels(n);
  for (auto& y : labels) y = static_cast<int>(UniformInt(rng, 0, classes - 1));

  // Chung-Lu weights w_i ~ i^(-1/(gamma-1)), shuffled so degree is
  // independent of vertex id.
  std::vector<double> weight(n);
  for (std::size_t i = 0; i < n; ++i) {
    weight[i] = std::pow(static_cast<double>(i + 1), -1.0 / (spec.power_law_exponent - 1.0));
  }
  std::shuffle(weight.begin(), weight.end(), rng);

  std::vector<double> all_prefix(n);
  std::vector<std::vector<VertexId>> members(classes);
  std::vector<std::vector<double>> class_prefix(classes);
  double running = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    running += weight[i];
    all_prefix[i] = running;
    const auto c = static_cast<std::size_t>(labels[i]);
    members[c].push_back(static_cast<VertexId>(i));
    class_prefix[c].push_back((class_prefix[c].empty() ? 0.0 : class_prefix[c].back()) + weight[i]);
  }

  const auto target = static_cast<std::size_t>(spec.mean_degree * static_cast<double>(n) / 2.0);
  std::set<Edge> edges;
  std::size_t attempts = 0;
  while (edges.size() < target && attempts < 50 * target) {
    ++attempts;
    const auto u = static_cast<VertexId>(DrawWeighted(all_prefix, rng));
    VertexId v = 0;
    const auto c = static_cast<std::size_t>(labels[u]);
    if (UniformUnit(rng) < spec.homophily && members[c].size() > 1) {
      v = members[c][DrawWeighted(class_prefix[c], rng)];
    } else {
      v = static_cast<VertexId>(DrawWeighted(all_prefix, rng));
    }
    if (u == v) continue;
    edges.insert({std::min(u, v), std::max(u, v)});
  }

  std::normal_distribution<double> noise(0.0, spec.feature_noise);
  Matrix prototypes(classes, spec.feature_dim);
  for (Eigen::Index i = 0; i < prototypes.size(); ++i) prototypes.data()[i] = UniformUnit(rng);
  Matrix features(n, spec.feature_dim);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < spec.feature_dim; ++j) {
      const double x = prototypes(labels[i], j) + noise(rng);
      features(i, j) = std::clamp(x, 0.0, 1.0);
    }
  }
  return GlobalGraph::Create(n, {edges.begin(), edges.end()}, std::move(features),
                             std::move(labels), {});
}

GlobalGraph RandomGraph(std::size_t n, double p, Rng& rng, std::size_t feature_dim,
                        int num_classes) {
  std::vector<Edge> edges;
  for (VertexId u = 0; u < n; ++u) {
    for (VertexId v = u + 1; v < n; ++v) {
      if (UniformUnit(rng) < p) edges.push_back({u, v});
    }
  }
  Matrix features(n, feature_dim);
  for (Eigen::Index i = 0; i < features.size(); ++i) features.data()[i] = UniformUnit(rng);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = static_cast<int>(i % static_cast<std::size_t>(num_classes));
  }
  return GlobalGraph::Create(n, std::move(edges), std::move(features), std::move(labels), {});
}

GlobalGraph RandomGraphWithEdges(std::size_t n, std::size_t m, Rng& rng) {
  std::vector<Edge> all;
  for (VertexId u = 0; u < n; ++u) {
    for (VertexId v = u + 1; v < n; ++v) all.push_back({u, v});
  }
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(std::min(m, all.size()));
  return GlobalGraph::FromEdges(n, std::move(all));
}

void WriteDatasetCsv(const GlobalGraph& graph, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream edges(dir / "edges.csv");
  for (const auto& e : graph.edges()) edges << e.first << ',' << e.second << '\n';
  std::ofstream features(dir / "features.csv");
  features << std::setprecision(17);
  for (Eigen::Index i = 0; i < graph.features().rows(); ++i) {
    for (Eigen::Index j = 0; j < graph.features().cols(); ++j) {
      features << (j ? "," : "") << graph.features()(i, j);
    }
    features << '\n';
  }
  std::ofstream labels(dir / "labels.csv");
  for (int y : graph.labels()) labels << y << '\n';
}

}  // namespace fedtree::testing
