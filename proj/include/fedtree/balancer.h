#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <ostream>
#include <span>
#include <vector>

#include "fedtree/graph.h"
#include "fedtree/rng.h"
#include "fedtree/secure_channel.h"

namespace fedtree {

// Per-device retained neighbor sets N_u. Device u keeps a leaf pair for v in
// its tree iff v is in N_u. Each set is kept sorted.
class NeighborSelection {
 public:
  NeighborSelection() = default;
  explicit NeighborSelection(std::size_t num_vertices) : retained_(num_vertices) {}

  std::size_t num_vertices() const { return retained_.size(); }
  std::span<const VertexId> retained(VertexId u) const { return retained_[u]; }
  std::size_t workload(VertexId u) const { return retained_[u].size(); }
  std::vector<std::size_t> workloads() const;
  std::size_t total_workload() const;

  bool contains(VertexId u, VertexId v) const;
  // Set semantics: returns whether the set actually changed.
  bool insert(VertexId u, VertexId v);
  bool erase(VertexId u, VertexId v);

  friend bool operator==(const NeighborSelection&, const NeighborSelection&) = default;

 private:
  std::vector<std::vector<VertexId>> retained_;
};

// Every device keeps every neighbor (the untrimmed configuration).
NeighborSelection FullSelection(const GlobalGraph& graph);

// For every edge (u, v): v in N_u or u in N_v.
bool SatisfiesCoverage(const GlobalGraph& graph, const NeighborSelection& selection);
// N_u is a subset of u's adjacency for every u.
bool RespectsAdjacency(const GlobalGraph& graph, const NeighborSelection& selection);

// round(ln(degree)), rounding half to even.
std::int64_t RoundedLogDegree(std::size_t degree);

// Greedy initialization: v joins N_u iff round(ln deg v) >= round(ln deg u).
// Each of the 2|E| decisions is one secure comparison.
NeighborSelection GreedyInit(const GlobalGraph& graph, SecureChannel& channel);

// max_u |N_u|.
std::size_t Objective(const NeighborSelection& selection);

struct ArgmaxStats {
  std::uint64_t local_comparisons = 0;
  std::uint64_t global_comparisons = 0;
  std::size_t candidates = 0;
  // Candidate reports, winner reports and the final announcement.
  std::uint64_t server_messages = 0;
};

// Distributed argmax. Phase one: every device compares its workload with each
// graph neighbor in turn and reports itself as a candidate if none is larger.
// Phase two: candidates compare against each other in a server-chosen random
// order; those that find nobody larger report back and the server picks one
// uniformly at random. Phase one may run on `threads` workers; the candidate
// set and ledger contents are identical to a sequential run.
VertexId FindMaxDevice(const GlobalGraph& graph, const NeighborSelection& selection,
                       SecureChannel& channel, Rng& server_rng, ArgmaxStats* stats = nullptr,
                       int threads = 1);

// k ~ Uniform{1, ..., max(1, round(ln workload))}.
std::size_t SampleStepSize(std::size_t workload, Rng& rng);

struct Proposal {
  NeighborSelection selection;
  std::vector<VertexId> moved;
};

// Moves k uniformly chosen members v of N_u across the edge:
// N_u -= {v}, N_v += {u}. Throws kEmptySelection if N_u is empty.
Proposal McmcPropose(const NeighborSelection& selection, VertexId u, Rng& rng);

// min(1, exp(delta)) where delta = f_old - f_new.
double AcceptanceProbability(std::int64_t delta);

// Metropolis-Hastings decision. The difference is obtained through the channel
// between the two max-workload devices; one uniform draw is always consumed.
bool MhAccept(std::int64_t f_old, std::int64_t f_new, SecureChannel& channel, VertexId proposer,
              VertexId other, Rng& rng);

struct TelemetryRow {
  std::size_t iteration = 0;
  VertexId proposer = 0;
  std::size_t step = 0;
  std::size_t f_old = 0;
  std::size_t f_new = 0;
  bool accepted = false;
  std::size_t best_so_far = 0;
};

struct McmcConfig {
  std::size_t iterations = 300;
  std::uint64_t seed = 0;
  int threads = 1;
  // Called after every iteration with the chain state it ended in.
  std::function<void(const TelemetryRow&, const NeighborSelection&)> observer;
};

struct BalanceResult {
  // Final chain state (not the best one seen).
  NeighborSelection selection;
  NeighborSelection best;
  std::size_t best_objective = 0;
  std::vector<TelemetryRow> telemetry;
  // Comparisons issued by the algorithm itself, for auditing against the ledger.
  std::uint64_t comparisons = 0;
  // Messages to and from the coordinating server during argmax.
  std::uint64_t server_messages = 0;
  // Membership updates sent to moved neighbors, including undo on rejection.
  std::uint64_t state_updates = 0;
};

BalanceResult Balance(const GlobalGraph& graph, const NeighborSelection& init,
                      const McmcConfig& config, SecureChannel& channel);

struct OracleResult {
  std::size_t optimum = 0;
  NeighborSelection witness;
};

inline constexpr std::size_t kOracleMaxEdges = 24;

// Exact minimum of the min-max workload problem by branch and bound over
// single-sided edge assignments. Throws kTooLarge above kOracleMaxEdges.
OracleResult BruteForceOptimum(const GlobalGraph& graph);

// `u,v` per line meaning v is in N_u.
void WriteSelectionCsv(std::ostream& out, const NeighborSelection& selection);
void WriteTelemetryCsv(std::ostream& out, std::span<const TelemetryRow> rows);

}  // namespace fedtree
