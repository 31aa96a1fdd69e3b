#include "fedtree/balancer.h"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <string>
#include <thread>

#include "fedtree/error.h"

namespace fedtree {

std::vector<std::size_t> NeighborSelection::workloads() const {
  std::vector<std::size_t> out(retained_.size());
  for (std::size_t u = 0; u < retained_.size(); ++u) out[u] = retained_[u].size();
  return out;
}

std::size_t NeighborSelection::total_workload() const {
  std::size_t total = 0;
  for (const auto& set : retained_) total += set.size();
  return total;
}

bool NeighborSelection::contains(VertexId u, VertexId v) const {
  const auto& set = retained_[u];
  return std::binary_search(set.begin(), set.end(), v);
}

bool NeighborSelection::insert(VertexId u, VertexId v) {
  auto& set = retained_[u];
  const auto it = std::lower_bound(set.begin(), set.end(), v);
  if (it != set.end() && *it == v) return false;
  set.insert(it, v);
  return true;
}

bool NeighborSelection::erase(VertexId u, VertexId v) {
  auto& set = retained_[u];
  const auto it = std::lower_bound(set.begin(), set.end(), v);
  if (it == set.end() || *it != v) return false;
  set.erase(it);
  return true;
}

NeighborSelection FullSelection(const GlobalGraph& graph) {
  NeighborSelection sel(graph.num_vertices());
  for (VertexId u = 0; u < graph.num_vertices(); ++u) {
    for (VertexId v : graph.neighbors(u)) sel.insert(u, v);
  }
  return sel;
}

bool SatisfiesCoverage(const GlobalGraph& graph, const NeighborSelection& selection) {
  if (selection.num_vertices() != graph.num_vertices()) return false;
  for (const auto& e : graph.edges()) {
    if (!selection.contains(e.first, e.second) && !selection.contains(e.second, e.first)) {
      return false;
    }
  }
  return true;
}

bool RespectsAdjacency(const GlobalGraph& graph, const NeighborSelection& selection) {
  if (selection.num_vertices() != graph.num_vertices()) return false;
  for (VertexId u = 0; u < graph.num_vertices(); ++u) {
    for (VertexId v : selection.retained(u)) {
      if (!graph.has_edge(u, v)) return false;
    }
  }
  return true;
}

std::int64_t RoundedLogDegree(std::size_t degree) {
  if (degree == 0) return 0;
  // nearbyint honours the default round-half-to-even mode.
  return static_cast<std::int64_t>(std::nearbyint(std::log(static_cast<double>(degree))));
}

NeighborSelection GreedyInit(const GlobalGraph& graph, SecureChannel& channel) {
  const std::size_t n = graph.num_vertices();
  std::vector<std::int64_t> level(n);
  for (VertexId u = 0; u < n; ++u) level[u] = RoundedLogDegree(graph.degree(u));

  NeighborSelection sel(n);
  for (VertexId u = 0; u < n; ++u) {
    for (VertexId v : graph.neighbors(u)) {
      if (channel.Compare(level[v], level[u], v, u, CompareContext::kGreedyInit)) {
        sel.insert(u, v);
      }
    }
  }
  return sel;
}

std::size_t Objective(const NeighborSelection& selection) {
  std::size_t best = 0;
  for (VertexId u = 0; u < selection.num_vertices(); ++u) {
    best = std::max(best, selection.workload(u));
  }
  return best;
}

namespace {

// Phase one for devices [begin, end): each checks whether any neighbor holds
// a strictly larger workload.
std::uint64_t FindCandidates(const GlobalGraph& graph, const NeighborSelection& selection,
                             SecureChannel& channel, VertexId begin, VertexId end,
                             std::vector<char>& is_candidate) {
  std::uint64_t comparisons = 0;
  for (VertexId v = begin; v < end; ++v) {
    const auto wv = static_cast<std::int64_t>(selection.workload(v));
    bool candidate = true;
    for (VertexId u : graph.neighbors(v)) {
      ++comparisons;
      if (!channel.Compare(wv, static_cast<std::int64_t>(selection.workload(u)), v, u,
                           CompareContext::kArgmaxLocal)) {
        candidate = false;
        break;
      }
    }
    is_candidate[v] = candidate ? 1 : 0;
  }
  return comparisons;
}

}  // namespace

VertexId FindMaxDevice(const GlobalGraph& graph, const NeighborSelection& selection,
                       SecureChannel& channel, Rng& server_rng, ArgmaxStats* stats,
                       int threads) {
  const std::size_t n = graph.num_vertices();
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, "graph has no vertices");
  std::vector<char> is_candidate(n, 0);
  std::uint64_t local = 0;

  const std::size_t workers = std::clamp<std::size_t>(static_cast<std::size_t>(threads), 1, n);
  if (workers == 1) {
    local = FindCandidates(graph, selection, channel, 0, static_cast<VertexId>(n), is_candidate);
  } else {
    // Each worker logs into its own shard; shards are merged in vertex order
    // so the ledger matches a sequential run.
    std::vector<std::unique_ptr<PrivacyLedger>> shards;
    std::vector<std::uint64_t> counts(workers, 0);
    const std::size_t capacity = channel.ledger().retain_capacity();
    for (std::size_t w = 0; w < workers; ++w) {
      shards.push_back(std::make_unique<PrivacyLedger>(capacity));
    }
    {
      std::vector<std::jthread> pool;
      for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
          SecureChannel shard_channel(*shards[w], channel.options());
          const auto begin = static_cast<VertexId>(n * w / workers);
          const auto end = static_cast<VertexId>(n * (w + 1) / workers);
          counts[w] = FindCandidates(graph, selection, shard_channel, begin, end, is_candidate);
        });
      }
    }
    for (std::size_t w = 0; w < workers; ++w) {
      channel.ledger().Merge(*shards[w]);
      local += counts[w];
    }
  }

  std::vector<VertexId> cvs;
  for (VertexId v = 0; v < n; ++v) {
    if (is_candidate[v]) cvs.push_back(v);
  }
  // The server fixes the order in which candidates meet each other.
  for (std::size_t i = cvs.size(); i > 1; --i) {
    std::swap(cvs[i - 1], cvs[UniformInt(server_rng, 0, i - 1)]);
  }

  std::uint64_t global = 0;
  std::vector<VertexId> winners;
  for (VertexId c : cvs) {
    const auto wc = static_cast<std::int64_t>(selection.workload(c));
    bool largest = true;
    for (VertexId other : cvs) {
      if (other == c) continue;
      ++global;
      if (!channel.Compare(wc, static_cast<std::int64_t>(selection.workload(other)), c, other,
                           CompareContext::kArgmaxGlobal)) {
        largest = false;
        break;
      }
    }
    if (largest) winners.push_back(c);
  }
  std::sort(winners.begin(), winners.end());

  if (stats != nullptr) {
    stats->local_comparisons += local;
    stats->global_comparisons += global;
    stats->candidates = cvs.size();
    stats->server_messages += cvs.size() + winners.size() + 1;
  }
  if (winners.size() == 1) return winners.front();
  return winners[UniformInt(server_rng, 0, winners.size() - 1)];
}

std::size_t SampleStepSize(std::size_t workload, Rng& rng) {
  std::int64_t upper = 1;
  if (workload > 0) {
    upper = std::max<std::int64_t>(
        1, static_cast<std::int64_t>(std::nearbyint(std::log(static_cast<double>(workload)))));
  }
  return static_cast<std::size_t>(UniformInt(rng, 1, static_cast<std::uint64_t>(upper)));
}

namespace {

struct Move {
  VertexId target = 0;
  // Whether the proposer was newly added to the target's set.
  bool added = false;
};

std::vector<VertexId> SampleMovedNeighbors(const NeighborSelection& selection, VertexId u,
                                           Rng& rng) {
  const auto retained = selection.retained(u);
  if (retained.empty()) {
    throw Error(ErrorCode::kEmptySelection, "device " + std::to_string(u) + " has an empty N_u");
  }
  const std::size_t k = SampleStepSize(retained.size(), rng);
  std::vector<VertexId> pool(retained.begin(), retained.end());
  for (std::size_t i = 0; i < k; ++i) {
    std::swap(pool[i], pool[UniformInt(rng, i, pool.size() - 1)]);
  }
  pool.resize(k);
  return pool;
}

std::vector<Move> ApplyMoves(NeighborSelection& selection, VertexId u,
                             const std::vector<VertexId>& targets) {
  std::vector<Move> moves;
  moves.reserve(targets.size());
  for (VertexId v : targets) {
    selection.erase(u, v);
    moves.push_back({v, selection.insert(v, u)});
  }
  return moves;
}

void UndoMoves(NeighborSelection& selection, VertexId u, const std::vector<Move>& moves) {
  for (const auto& m : moves) {
    selection.insert(u, m.target);
    if (m.added) selection.erase(m.target, u);
  }
}

}  // namespace

Proposal McmcPropose(const NeighborSelection& selection, VertexId u, Rng& rng) {
  Proposal proposal;
  proposal.moved = SampleMovedNeighbors(selection, u, rng);
  proposal.selection = selection;
  ApplyMoves(proposal.selection, u, proposal.moved);
  return proposal;
}

double AcceptanceProbability(std::int64_t delta) {
  return delta >= 0 ? 1.0 : std::exp(static_cast<double>(delta));
}

bool MhAccept(std::int64_t f_old, std::int64_t f_new, SecureChannel& channel, VertexId proposer,
              VertexId other, Rng& rng) {
  const std::int64_t delta = channel.Delta(f_old, f_new, proposer, other);
  return UniformUnit(rng) < AcceptanceProbability(delta);
}

BalanceResult Balance(const GlobalGraph& graph, const NeighborSelection& init,
                      const McmcConfig& config, SecureChannel& channel) {
  BalanceResult result;
  result.selection = init;
  result.best = init;
  result.best_objective = Objective(init);
  result.telemetry.reserve(config.iterations);

  auto server_rng = MakeStream(config.seed, "mcmc/server");
  auto proposer_rng = MakeStream(config.seed, "mcmc/proposer");
  auto coin_rng = MakeStream(config.seed, "mcmc/coin");

  auto& state = result.selection;
  ArgmaxStats stats;
  std::uint64_t delta_comparisons = 0;
  for (std::size_t t = 1; t <= config.iterations; ++t) {
    TelemetryRow row;
    row.iteration = t;
    const VertexId u = FindMaxDevice(graph, state, channel, server_rng, &stats, config.threads);
    row.proposer = u;
    row.f_old = state.workload(u);
    if (row.f_old == 0) {
      // Nothing to move: every device is idle.
      row.f_new = 0;
      row.best_so_far = result.best_objective;
      result.telemetry.push_back(row);
      if (config.observer) config.observer(row, state);
      continue;
    }
    const auto targets = SampleMovedNeighbors(state, u, proposer_rng);
    row.step = targets.size();
    const auto moves = ApplyMoves(state, u, targets);
    result.state_updates += targets.size();
    const VertexId u_new = FindMaxDevice(graph, state, channel, server_rng, &stats, config.threads);
    row.f_new = state.workload(u_new);
    ++delta_comparisons;
    row.accepted = MhAccept(static_cast<std::int64_t>(row.f_old),
                            static_cast<std::int64_t>(row.f_new), channel, u, u_new, coin_rng);
    if (!row.accepted) {
      UndoMoves(state, u, moves);
      result.state_updates += targets.size();
    } else if (row.f_new < result.best_objective) {
      result.best_objective = row.f_new;
      result.best = state;
    }
    row.best_so_far = result.best_objective;
    result.telemetry.push_back(row);
    if (config.observer) config.observer(row, state);
  }
  result.comparisons = stats.local_comparisons + stats.global_comparisons + delta_comparisons;
  result.server_messages = stats.server_messages;
  return result;
}

namespace {

struct OracleSearch {
  const std::vector<Edge>& edges;
  std::vector<std::size_t> load;
  std::vector<char> assign_first;
  std::vector<char> best_assign_first;
  std::size_t best;

  void Search(std::size_t index, std::size_t current_max) {
    if (index == edges.size()) {
      best = current_max;
      best_assign_first = assign_first;
      return;
    }
    const Edge& e = edges[index];
    for (int side = 0; side < 2; ++side) {
      const VertexId holder = side == 0 ? e.first : e.second;
      const std::size_t next_max = std::max(current_max, load[holder] + 1);
      if (next_max >= best) continue;
      ++load[holder];
      assign_first[index] = side == 0 ? 1 : 0;
      Search(index + 1, next_max);
      --load[holder];
    }
  }
};

}  // namespace

OracleResult BruteForceOptimum(const GlobalGraph& graph) {
  if (graph.num_edges() > kOracleMaxEdges) {
    throw Error(ErrorCode::kTooLarge, "oracle supports at most " +
                                          std::to_string(kOracleMaxEdges) + " edges, got " +
                                          std::to_string(graph.num_edges()));
  }
  // Keeping an edge on both sides never lowers the maximum, so each edge is
  // assigned to exactly one endpoint.
  std::vector<Edge> edges(graph.edges().begin(), graph.edges().end());
  OracleSearch search{edges, std::vector<std::size_t>(graph.num_vertices(), 0),
                      std::vector<char>(edges.size(), 0), {}, graph.max_degree() + 1};
  search.Search(0, 0);

  OracleResult result;
  result.optimum = edges.empty() ? 0 : search.best;
  result.witness = NeighborSelection(graph.num_vertices());
  for (std::size_t i = 0; i < edges.size(); ++i) {
    if (search.best_assign_first[i]) {
      result.witness.insert(edges[i].first, edges[i].second);
    } else {
      result.witness.insert(edges[i].second, edges[i].first);
    }
  }
  return result;
}

void WriteSelectionCsv(std::ostream& out, const NeighborSelection& selection) {
  for (VertexId u = 0; u < selection.num_vertices(); ++u) {
    for (VertexId v : selection.retained(u)) out << u << ',' << v << '\n';
  }
}

void WriteTelemetryCsv(std::ostream& out, std::span<const TelemetryRow> rows) {
  out << "iteration,proposer,k,f_old,f_new,accepted,best_so_far\n";
  for (const auto& r : rows) {
    out << r.iteration << ',' << r.proposer << ',' << r.step << ',' << r.f_old << ',' << r.f_new
        << ',' << (r.accepted ? 1 : 0) << ',' << r.best_so_far << '\n';
  }
}

}  // namespace fedtree
