#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedtree/balancer.h"
#include "fedtree/error.h"
#include "fedtree/gnn.h"
#include "fedtree/graph.h"
#include "fedtree/ldp.h"
#include "fedtree/secure_channel.h"
#include "fedtree/tree.h"

namespace fedtree {

struct RunConfig {
  struct Dataset {
    std::string edges;
    std::string features;
    std::string labels;
  };
  struct Ablation {
    bool no_trim = false;
    bool no_virtual_nodes = false;
  };

  Dataset dataset;
  TaskMode mode = TaskMode::kSupervised;
  double epsilon = 2.0;
  std::size_t mcmc_iters = 300;
  std::size_t epochs = 300;
  double lr = 0.01;
  std::size_t hidden_dim = 16;
  double dropout = 0.01;
  std::size_t neg_samples = 1;
  std::uint64_t seed = 0;
  Ablation ablation;
  std::string out_dir = "out";
  int threads = 1;
  int bit_width = 32;
  double feature_lower = 0.0;
  double feature_upper = 1.0;
  bool rescale_features = true;
  // Transcripts kept in memory for privacy_ledger.csv; counters stay exact.
  std::size_t privacy_transcript_limit = 1'000'000;

  // Throws kConfigError. The dataset check is skipped for preloaded graphs.
  void Validate(bool require_dataset = true) const;
  TrainConfig ToTrainConfig() const;
  nlohmann::json ToJson() const;
  // Rejects unknown keys and wrongly typed values with kConfigError. Keys
  // absent from `doc` keep their defaults.
  static RunConfig FromJson(const nlohmann::json& doc);
};

std::string_view TaskModeName(TaskMode mode);

// Reads a JSON config file; a missing or unreadable file is a kConfigError
// whose message names the path.
nlohmann::json ReadConfigFile(const std::filesystem::path& path);

// Applies `key=value` with a dotted key (e.g. `ablation.no_trim=true`) to a
// config document. The value is parsed according to the schema type of the
// key; unknown keys and unparsable values are kConfigError.
void ApplyOverride(nlohmann::json& doc, std::string_view assignment);

// Dotted names of every config key, for help text and validation.
std::vector<std::string> ConfigKeys();

// A failure inside one pipeline phase. Carries the phase name and the
// underlying error code.
class PhaseError : public std::runtime_error {
 public:
  PhaseError(std::string phase, ErrorCode code, const std::string& message);
  const std::string& phase() const { return phase_; }
  ErrorCode code() const { return code_; }

 private:
  std::string phase_;
  ErrorCode code_;
};

// Directed device-to-device messages by phase.
struct CommLedger {
  std::size_t num_devices = 0;
  std::uint64_t secure_comparisons = 0;
  std::uint64_t server_messages = 0;
  std::uint64_t state_updates = 0;
  std::uint64_t feature_messages = 0;
  // Leaf embeddings sent to the owning vertex plus gradients sent back.
  std::uint64_t embedding_exchanges = 0;
  std::uint64_t loss_messages = 0;
  // Link mode: embeddings fetched from the other endpoint of a loss pair.
  std::uint64_t embedding_requests = 0;
  std::uint64_t epochs = 0;

  std::uint64_t training_messages() const {
    return embedding_exchanges + loss_messages + embedding_requests;
  }
  std::uint64_t total() const {
    return secure_comparisons + server_messages + state_updates + feature_messages +
           training_messages();
  }
  // `phase,counter,value`.
  void WriteCsv(std::ostream& out) const;
};

// Directed leaf-embedding transfers in one epoch:
// sum over u of |N_u| + |{v : u in N_v}|.
std::uint64_t EpochExchangeCount(const NeighborSelection& selection);

struct CommAccounting {
  double training_rounds_per_device_per_epoch = 0.0;
  double exchanges_per_device_per_epoch = 0.0;
  double total_rounds_per_device = 0.0;
};

// Throws kEmptyReport when the ledger covers no devices.
CommAccounting CommAccountingReport(const CommLedger& ledger);

// Relative reduction of `trimmed` against `untrimmed`, in [0, 1] when the
// trimmed count is smaller.
double ExchangeReduction(std::uint64_t trimmed, std::uint64_t untrimmed);

struct CdfPoint {
  std::size_t workload = 0;
  double fraction = 0.0;
};

// Empirical CDF: one point per distinct workload, ascending.
std::vector<CdfPoint> WorkloadCdf(std::span<const std::size_t> workloads);
std::vector<std::size_t> DegreeSequence(const GlobalGraph& graph);

struct RunReport {
  std::string mode;
  std::string metric;  // accuracy or roc_auc
  EvalMetrics final_metrics;
  EvalMetrics best_validation;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
  std::size_t num_devices = 0;
  std::size_t num_edges = 0;
  std::size_t max_degree = 0;
  std::size_t max_workload = 0;
  std::size_t best_workload = 0;
  std::size_t total_workload = 0;
  std::size_t tree_nodes = 0;
  std::size_t orphans = 0;
  std::uint64_t epoch_exchanges = 0;
  CommLedger comm;
  std::uint64_t privacy_comparisons = 0;
  std::uint64_t privacy_bits = 0;
  bool privacy_ledger_truncated = false;
  std::size_t encodings = 0;
  double max_budget_deviation = 0.0;
  std::map<std::string, double> phase_ms;
  std::vector<CdfPoint> workload_cdf;
  std::vector<CdfPoint> degree_cdf;
  std::map<std::string, std::string> files;

  nlohmann::json ToJson() const;
};

// Split ratios used per mode: vertices 0.5/0.25/0.25 for classification,
// edges 0.8/0.05/0.15 for link prediction.
SplitRatios DefaultSplitRatios(TaskMode mode);

// Graph the devices see during balancing and training: the full graph for
// classification, the training edges only for link prediction.
GlobalGraph StructureGraph(const GlobalGraph& graph, const SplitSpec& split);

GlobalGraph LoadRunGraph(const RunConfig& config);

// Greedy initialization then MCMC, or every neighbor when trimming is off.
BalanceResult RunBalancePhase(const GlobalGraph& structure, const RunConfig& config,
                              SecureChannel& channel);

struct EncodeOutput {
  FeatureExchange exchange;
  BudgetAccountant budget;
  std::uint64_t encode_calls = 0;
};

// Every vertex that appears as a neighbor leaf in some tree encodes its
// feature once, split across the devices holding that leaf. `audit`, when
// given, receives every encoded message as CSV.
EncodeOutput RunEncodePhase(const GlobalGraph& graph, const NeighborSelection& selection,
                            const RunConfig& config, std::ostream* audit = nullptr);

// Internals of a run kept for inspection by tests and tools.
struct RunTrace {
  BalanceResult balance;
  std::vector<EpochMetrics> epochs;
  std::uint64_t encode_calls = 0;
  std::vector<double> budget_spent;  // per encoded sender
  std::size_t feature_messages = 0;
};

// load -> split -> balance -> construct -> encode -> train -> evaluate ->
// report. Errors are rethrown as PhaseError. `preloaded` skips loading. Files
// are written only when `config.out_dir` is non-empty.
RunReport RunPipeline(const RunConfig& config, const GlobalGraph* preloaded = nullptr,
                      RunTrace* trace = nullptr);

// Same split and model, trained centrally on the raw graph.
RunReport RunBaseline(const RunConfig& config, const GlobalGraph* preloaded = nullptr);

void WriteEpochsCsv(std::ostream& out, std::span<const EpochMetrics> epochs,
                    std::span<const std::uint64_t> comm_rounds);
void WriteCdfCsv(std::ostream& out, std::span<const CdfPoint> trimmed,
                 std::span<const CdfPoint> untrimmed);

}  // namespace fedtree
