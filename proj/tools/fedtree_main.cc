// Command-line front end: full runs, ablations, balancing, auditing and the
// exact workload oracle.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fedtree/balancer.h"
#include "fedtree/error.h"
#include "fedtree/graph.h"
#include "fedtree/runtime.h"
#include "fedtree/secure_channel.h"
#include "fedtree/tree.h"

namespace {

using fedtree::Error;
using fedtree::ErrorCode;
using fedtree::PhaseError;
using fedtree::RunConfig;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct ConfigFlags {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<int> threads;

  void Attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON run configuration");
    cmd->add_option("--set", overrides, "Override a config key, e.g. --set ablation.no_trim=true")
        ->take_all();
    cmd->add_option("--threads", threads, "Worker threads for parallel phases")
        ->check(CLI::PositiveNumber);
  }

  RunConfig Load() const {
    nlohmann::json doc =
        config_path.empty() ? nlohmann::json::object() : fedtree::ReadConfigFile(config_path);
    for (const auto& o : overrides) fedtree::ApplyOverride(doc, o);
    if (threads) doc["threads"] = *threads;
    auto config = RunConfig::FromJson(doc);
    config.Validate();
    return config;
  }
};

template <typename Fn>
auto Phase(const std::string& name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kConfigError) throw;
    throw PhaseError(name, e.code(), e.what());
  }
}

std::ofstream OpenOutput(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  return out;
}

std::filesystem::path OutDir(const RunConfig& config) {
  return config.out_dir.empty() ? std::filesystem::path(".") : std::filesystem::path(config.out_dir);
}

// Graph as the devices see it, plus its balanced selection.
struct Prepared {
  fedtree::GlobalGraph graph;
  fedtree::GlobalGraph structure;
  fedtree::BalanceResult balance;
  std::uint64_t comparisons = 0;
};

Prepared Prepare(const RunConfig& config) {
  Prepared p;
  p.graph = Phase("load", [&] { return fedtree::LoadRunGraph(config); });
  p.structure = Phase("split", [&] {
    const auto mode = config.mode == fedtree::TaskMode::kSupervised
                          ? fedtree::SplitMode::kSupervised
                          : fedtree::SplitMode::kUnsupervised;
    const auto split =
        fedtree::MakeSplit(p.graph, mode, fedtree::DefaultSplitRatios(config.mode), config.seed);
    return fedtree::StructureGraph(p.graph, split);
  });
  fedtree::PrivacyLedger ledger(config.privacy_transcript_limit);
  fedtree::ChannelOptions options;
  options.bit_width = config.bit_width;
  fedtree::SecureChannel channel(ledger, options);
  p.balance = Phase("balance", [&] { return fedtree::RunBalancePhase(p.structure, config, channel); });
  p.comparisons = ledger.total_comparisons();
  return p;
}

void PrintMetrics(const fedtree::RunReport& report) {
  std::cout << std::setprecision(4) << std::fixed;
  std::cout << report.metric << " train " << report.final_metrics.train << " validation "
            << report.final_metrics.validation << " test " << report.final_metrics.test << '\n';
  std::cout << "best validation at epoch " << report.best_epoch << ": test "
            << report.best_validation.test << '\n';
}

int CmdRun(const ConfigFlags& flags) {
  const auto config = flags.Load();
  const auto report = fedtree::RunPipeline(config);
  PrintMetrics(report);
  std::cout << "max workload " << report.max_workload << " (max degree " << report.max_degree
            << "), leaf exchanges per epoch " << report.epoch_exchanges << '\n';
  if (report.files.count("run_report.json")) {
    std::cout << "report " << report.files.at("run_report.json") << '\n';
  }
  return kExitOk;
}

int CmdBaseline(const ConfigFlags& flags) {
  const auto config = flags.Load();
  const auto report = fedtree::RunBaseline(config);
  PrintMetrics(report);
  return kExitOk;
}

int CmdBalance(const ConfigFlags& flags) {
  const auto config = flags.Load();
  const auto p = Prepare(config);
  const auto dir = OutDir(config);
  {
    auto out = OpenOutput(dir / "selection.csv");
    fedtree::WriteSelectionCsv(out, p.balance.selection);
  }
  {
    auto out = OpenOutput(dir / "telemetry.csv");
    fedtree::WriteTelemetryCsv(out, p.balance.telemetry);
  }
  std::cout << "max workload " << fedtree::Objective(p.balance.selection) << ", best seen "
            << p.balance.best_objective << ", max degree " << p.structure.max_degree() << '\n';
  std::cout << "iterations " << p.balance.telemetry.size() << ", secure comparisons "
            << p.comparisons << '\n';
  std::cout << "wrote " << (dir / "selection.csv").string() << " and "
            << (dir / "telemetry.csv").string() << '\n';
  return kExitOk;
}

int CmdTrees(const ConfigFlags& flags, std::optional<std::uint32_t> dot_device) {
  const auto config = flags.Load();
  const auto p = Prepare(config);
  const auto& sel = p.balance.selection;
  if (dot_device) {
    if (*dot_device >= sel.num_vertices()) {
      throw Error(ErrorCode::kInvalidArgument, "no device " + std::to_string(*dot_device));
    }
    std::cout << fedtree::BuildTree(*dot_device, sel.retained(*dot_device)).ToDot();
    return kExitOk;
  }
  const auto path = OutDir(config) / "trees.csv";
  auto out = OpenOutput(path);
  out << "device,workload,nodes,edges\n";
  std::size_t nodes = 0;
  for (fedtree::VertexId u = 0; u < sel.num_vertices(); ++u) {
    const auto tree = fedtree::BuildTree(u, sel.retained(u));
    out << u << ',' << tree.num_pairs() << ',' << tree.num_nodes() << ',' << tree.edges().size()
        << '\n';
    nodes += tree.num_nodes();
  }
  std::cout << "trees " << sel.num_vertices() << ", total nodes " << nodes << ", wrote "
            << path.string() << '\n';
  return kExitOk;
}

int CmdEncodeAudit(const ConfigFlags& flags) {
  const auto config = flags.Load();
  const auto p = Prepare(config);
  const auto dir = OutDir(config);
  auto messages = OpenOutput(dir / "encoded_messages.csv");
  const auto encoded = Phase("encode", [&] {
    return fedtree::RunEncodePhase(p.graph, p.balance.selection, config, &messages);
  });
  auto budget = OpenOutput(dir / "budget.csv");
  budget << std::setprecision(17) << "sender,spent,max_receiver_spend,encodings\n";
  double worst = 0.0;
  for (auto s : encoded.budget.senders()) {
    const double spent = encoded.budget.spent(s);
    worst = std::max(worst, std::abs(spent - config.epsilon));
    budget << s << ',' << spent << ',' << encoded.budget.max_receiver_spend(s) << ','
           << encoded.budget.encode_count(s) << '\n';
  }
  std::cout << "senders " << encoded.budget.senders().size() << ", messages "
            << encoded.exchange.size() << ", max |spent - epsilon| " << std::scientific << worst
            << '\n';
  return kExitOk;
}

int CmdCdf(const ConfigFlags& flags) {
  const auto config = flags.Load();
  const auto p = Prepare(config);
  const auto workloads = p.balance.selection.workloads();
  const auto degrees = fedtree::DegreeSequence(p.structure);
  const auto trimmed = fedtree::WorkloadCdf(workloads);
  const auto untrimmed = fedtree::WorkloadCdf(degrees);
  {
    auto out = OpenOutput(OutDir(config) / "workload_cdf.csv");
    fedtree::WriteCdfCsv(out, trimmed, untrimmed);
  }
  fedtree::WriteCdfCsv(std::cout, trimmed, untrimmed);
  return kExitOk;
}

int CmdOracle(const std::string& edge_path) {
  const auto graph = Phase("load", [&] { return fedtree::LoadEdgeList(edge_path); });
  const auto result = Phase("oracle", [&] { return fedtree::BruteForceOptimum(graph); });
  std::cout << "optimum " << result.optimum << '\n';
  fedtree::WriteSelectionCsv(std::cout, result.witness);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated GNN training over per-device trees with workload trimming and "
               "locally private features"};
  app.require_subcommand(1);

  ConfigFlags flags;
  auto* run = app.add_subcommand("run", "Full pipeline: split, balance, trees, encode, train");
  flags.Attach(run);
  auto* baseline = app.add_subcommand("baseline", "Centralized GCN on the raw graph");
  flags.Attach(baseline);
  auto* balance = app.add_subcommand("balance", "Greedy init and MCMC only; writes selection.csv "
                                                "and telemetry.csv");
  flags.Attach(balance);
  auto* trees = app.add_subcommand("trees", "Build per-device trees; writes trees.csv");
  flags.Attach(trees);
  std::optional<std::uint32_t> dot_device;
  trees->add_option("--dot", dot_device, "Print one device's tree in Graphviz format");
  auto* audit = app.add_subcommand(
      "encode-audit", "Encode features once; writes encoded_messages.csv and budget.csv");
  flags.Attach(audit);
  auto* cdf = app.add_subcommand("cdf", "Workload CDF with and without trimming");
  flags.Attach(cdf);
  auto* oracle = app.add_subcommand("oracle", "Exact min-max workload for a small edge list");
  std::string edge_path;
  oracle->add_option("edges", edge_path, "Edge list CSV (u,v per line, at most 24 edges)")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*run) return CmdRun(flags);
    if (*baseline) return CmdBaseline(flags);
    if (*balance) return CmdBalance(flags);
    if (*trees) return CmdTrees(flags, dot_device);
    if (*audit) return CmdEncodeAudit(flags);
    if (*cdf) return CmdCdf(flags);
    if (*oracle) return CmdOracle(edge_path);
  } catch (const PhaseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.code() == ErrorCode::kConfigError ? kExitConfig : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitConfig;
}
