#include "fedtree/runtime.h"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>

namespace fedtree {
namespace {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

std::string DottedKey(const std::string& pointer) {
  std::string key = pointer.substr(1);
  std::replace(key.begin(), key.end(), '/', '.');
  return key;
}

// Checks `doc` against the shape and leaf types of `schema`.
void CheckAgainstSchema(const json& doc, const json& schema, const std::string& prefix) {
  if (!doc.is_object()) {
    throw Error(ErrorCode::kConfigError,
                (prefix.empty() ? std::string("config") : "'" + prefix + "'") +
                    " must be a JSON object");
  }
  for (const auto& [key, value] : doc.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    const auto it = schema.find(key);
    if (it == schema.end()) throw Error(ErrorCode::kConfigError, "unknown config key '" + path + "'");
    const json& expected = *it;
    bool ok = false;
    if (expected.is_object()) {
      CheckAgainstSchema(value, expected, path);
      ok = true;
    } else if (expected.is_boolean()) {
      ok = value.is_boolean();
    } else if (expected.is_number_unsigned()) {
      ok = value.is_number_unsigned() || (value.is_number_integer() && value.get<std::int64_t>() >= 0);
    } else if (expected.is_number_integer()) {
      ok = value.is_number_integer();
    } else if (expected.is_number()) {
      ok = value.is_number();
    } else if (expected.is_string()) {
      ok = value.is_string();
    }
    if (!ok) {
      throw Error(ErrorCode::kConfigError, "config key '" + path + "' expects " +
                                               std::string(expected.type_name()) + ", got " +
                                               std::string(value.type_name()));
    }
  }
}

template <typename T>
bool ParseWhole(std::string_view text, T& out) {
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size();
}

std::ofstream OpenOutput(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << std::setprecision(10);
  return out;
}

// Accumulates wall time of a phase into its slot.
class PhaseTimer {
 public:
  explicit PhaseTimer(double& slot) : slot_(slot), start_(Clock::now()) {}
  ~PhaseTimer() {
    slot_ += std::chrono::duration<double, std::milli>(Clock::now() - start_).count();
  }

 private:
  double& slot_;
  Clock::time_point start_;
};

template <typename Fn>
auto RunPhase(const std::string& name, std::map<std::string, double>& timing, Fn&& fn)
    -> decltype(fn()) {
  PhaseTimer timer(timing[name]);
  try {
    return fn();
  } catch (const PhaseError&) {
    throw;
  } catch (const Error& e) {
    throw PhaseError(name, e.code(), e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    throw PhaseError(name, ErrorCode::kIo, e.what());
  } catch (const std::exception& e) {
    throw PhaseError(name, ErrorCode::kInvalidArgument, e.what());
  }
}

json CdfJson(std::span<const CdfPoint> cdf) {
  json out = json::array();
  for (const auto& p : cdf) out.push_back({p.workload, p.fraction});
  return out;
}

json MetricsJson(const EvalMetrics& m) {
  return {{"train", m.train}, {"validation", m.validation}, {"test", m.test}};
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

std::string_view TaskModeName(TaskMode mode) {
  return mode == TaskMode::kSupervised ? "supervised" : "unsupervised";
}

void RunConfig::Validate(bool require_dataset) const {
  auto fail = [](const std::string& message) { throw Error(ErrorCode::kConfigError, message); };
  if (require_dataset) {
    if (dataset.edges.empty()) fail("dataset.edges is required");
    if (dataset.features.empty()) fail("dataset.features is required");
    if (mode == TaskMode::kSupervised && dataset.labels.empty()) {
      fail("dataset.labels is required in supervised mode");
    }
  }
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) fail("epsilon must be positive");
  if (!(lr >= 0.0) || !std::isfinite(lr)) fail("lr must be non-negative");
  if (hidden_dim == 0) fail("hidden_dim must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
  if (mode == TaskMode::kUnsupervised && neg_samples == 0) fail("neg_samples must be positive");
  if (threads < 1) fail("threads must be at least 1");
  if (bit_width < 1 || bit_width > 62) fail("bit_width must lie in [1, 62]");
  if (!(feature_lower < feature_upper)) fail("feature_bounds.lower must be below upper");
}

TrainConfig RunConfig::ToTrainConfig() const {
  TrainConfig tc;
  tc.epochs = epochs;
  tc.learning_rate = lr;
  tc.dropout = dropout;
  tc.hidden_dim = hidden_dim;
  tc.epsilon = epsilon;
  tc.neg_per_positive = neg_samples;
  tc.seed = seed;
  tc.mode = mode;
  tc.threads = threads;
  return tc;
}

json RunConfig::ToJson() const {
  return {
      {"dataset",
       {{"edges", dataset.edges}, {"features", dataset.features}, {"labels", dataset.labels}}},
      {"mode", TaskModeName(mode)},
      {"epsilon", epsilon},
      {"mcmc_iters", mcmc_iters},
      {"epochs", epochs},
      {"lr", lr},
      {"hidden_dim", hidden_dim},
      {"dropout", dropout},
      {"neg_samples", neg_samples},
      {"seed", seed},
      {"ablation",
       {{"no_trim", ablation.no_trim}, {"no_virtual_nodes", ablation.no_virtual_nodes}}},
      {"out_dir", out_dir},
      {"threads", threads},
      {"bit_width", bit_width},
      {"feature_bounds", {{"lower", feature_lower}, {"upper", feature_upper}}},
      {"rescale_features", rescale_features},
      {"privacy_transcript_limit", privacy_transcript_limit},
  };
}

RunConfig RunConfig::FromJson(const json& doc) {
  const json schema = RunConfig{}.ToJson();
  CheckAgainstSchema(doc, schema, "");
  json merged = schema;
  merged.merge_patch(doc);

  RunConfig c;
  c.dataset.edges = merged["dataset"]["edges"].get<std::string>();
  c.dataset.features = merged["dataset"]["features"].get<std::string>();
  c.dataset.labels = merged["dataset"]["labels"].get<std::string>();
  const auto mode = merged["mode"].get<std::string>();
  if (mode == "supervised") {
    c.mode = TaskMode::kSupervised;
  } else if (mode == "unsupervised") {
    c.mode = TaskMode::kUnsupervised;
  } else {
    throw Error(ErrorCode::kConfigError,
                "mode must be 'supervised' or 'unsupervised', got '" + mode + "'");
  }
  c.epsilon = merged["epsilon"].get<double>();
  c.mcmc_iters = merged["mcmc_iters"].get<std::size_t>();
  c.epochs = merged["epochs"].get<std::size_t>();
  c.lr = merged["lr"].get<double>();
  c.hidden_dim = merged["hidden_dim"].get<std::size_t>();
  c.dropout = merged["dropout"].get<double>();
  c.neg_samples = merged["neg_samples"].get<std::size_t>();
  c.seed = merged["seed"].get<std::uint64_t>();
  c.ablation.no_trim = merged["ablation"]["no_trim"].get<bool>();
  c.ablation.no_virtual_nodes = merged["ablation"]["no_virtual_nodes"].get<bool>();
  c.out_dir = merged["out_dir"].get<std::string>();
  c.threads = merged["threads"].get<int>();
  c.bit_width = merged["bit_width"].get<int>();
  c.feature_lower = merged["feature_bounds"]["lower"].get<double>();
  c.feature_upper = merged["feature_bounds"]["upper"].get<double>();
  c.rescale_features = merged["rescale_features"].get<bool>();
  c.privacy_transcript_limit = merged["privacy_transcript_limit"].get<std::size_t>();
  return c;
}

json ReadConfigFile(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kConfigError, "cannot open config file " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kConfigError, path.string() + ": " + e.what());
  }
}

void ApplyOverride(json& doc, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw Error(ErrorCode::kConfigError,
                "override must look like key=value, got '" + std::string(assignment) + "'");
  }
  const std::string key(assignment.substr(0, eq));
  const std::string_view text = assignment.substr(eq + 1);
  std::string pointer = "/" + key;
  std::replace(pointer.begin(), pointer.end(), '.', '/');
  const json::json_pointer ptr(pointer);

  const json schema = RunConfig{}.ToJson();
  if (!schema.contains(ptr) || schema.at(ptr).is_object()) {
    throw Error(ErrorCode::kConfigError, "unknown config key '" + key + "'");
  }
  const json& expected = schema.at(ptr);
  auto bad_value = [&]() {
    return Error(ErrorCode::kConfigError, "cannot parse '" + std::string(text) + "' as " +
                                              std::string(expected.type_name()) + " for '" + key +
                                              "'");
  };
  json value;
  if (expected.is_boolean()) {
    if (text == "true" || text == "1") {
      value = true;
    } else if (text == "false" || text == "0") {
      value = false;
    } else {
      throw bad_value();
    }
  } else if (expected.is_number_unsigned()) {
    std::uint64_t v = 0;
    if (!ParseWhole(text, v)) throw bad_value();
    value = v;
  } else if (expected.is_number_integer()) {
    std::int64_t v = 0;
    if (!ParseWhole(text, v)) throw bad_value();
    value = v;
  } else if (expected.is_number()) {
    double v = 0.0;
    if (!ParseWhole(text, v)) throw bad_value();
    value = v;
  } else {
    value = std::string(text);
  }
  doc[ptr] = std::move(value);
}

std::vector<std::string> ConfigKeys() {
  std::vector<std::string> keys;
  const json flat = RunConfig{}.ToJson().flatten();
  for (const auto& [pointer, value] : flat.items()) {
    keys.push_back(DottedKey(pointer));
  }
  return keys;
}

PhaseError::PhaseError(std::string phase, ErrorCode code, const std::string& message)
    : std::runtime_error("phase '" + phase + "' failed: " + message),
      phase_(std::move(phase)),
      code_(code) {}

// ---------------------------------------------------------------------------
// Accounting

void CommLedger::WriteCsv(std::ostream& out) const {
  out << "phase,counter,value\n";
  out << "balance,secure_comparisons," << secure_comparisons << '\n';
  out << "balance,server_messages," << server_messages << '\n';
  out << "balance,state_updates," << state_updates << '\n';
  out << "encode,feature_messages," << feature_messages << '\n';
  out << "train,embedding_exchanges," << embedding_exchanges << '\n';
  out << "train,loss_messages," << loss_messages << '\n';
  out << "train,embedding_requests," << embedding_requests << '\n';
  out << "train,epochs," << epochs << '\n';
  out << "all,devices," << num_devices << '\n';
}

std::uint64_t EpochExchangeCount(const NeighborSelection& selection) {
  // Every v in N_u is one copy of v on u (sent to v) and one copy of u that
  // v pools from u's tree, so both sums equal the total workload.
  std::vector<std::uint64_t> held_elsewhere(selection.num_vertices(), 0);
  std::uint64_t own = 0;
  for (VertexId u = 0; u < selection.num_vertices(); ++u) {
    own += selection.workload(u);
    for (VertexId v : selection.retained(u)) ++held_elsewhere[v];
  }
  std::uint64_t total = own;
  for (auto c : held_elsewhere) total += c;
  return total;
}

CommAccounting CommAccountingReport(const CommLedger& ledger) {
  if (ledger.num_devices == 0) throw Error(ErrorCode::kEmptyReport, "ledger covers no devices");
  CommAccounting out;
  const double devices = static_cast<double>(ledger.num_devices);
  if (ledger.epochs > 0) {
    const double epochs = static_cast<double>(ledger.epochs);
    out.training_rounds_per_device_per_epoch =
        static_cast<double>(ledger.training_messages()) / devices / epochs;
    out.exchanges_per_device_per_epoch =
        static_cast<double>(ledger.embedding_exchanges) / devices / epochs;
  }
  out.total_rounds_per_device = static_cast<double>(ledger.total()) / devices;
  return out;
}

double ExchangeReduction(std::uint64_t trimmed, std::uint64_t untrimmed) {
  if (untrimmed == 0) return 0.0;
  return 1.0 - static_cast<double>(trimmed) / static_cast<double>(untrimmed);
}

std::vector<CdfPoint> WorkloadCdf(std::span<const std::size_t> workloads) {
  std::vector<std::size_t> sorted(workloads.begin(), workloads.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<CdfPoint> cdf;
  const double n = static_cast<double>(sorted.size());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (i + 1 == sorted.size() || sorted[i + 1] != sorted[i]) {
      cdf.push_back({sorted[i], static_cast<double>(i + 1) / n});
    }
  }
  return cdf;
}

std::vector<std::size_t> DegreeSequence(const GlobalGraph& graph) {
  std::vector<std::size_t> degrees(graph.num_vertices());
  for (VertexId u = 0; u < graph.num_vertices(); ++u) degrees[u] = graph.degree(u);
  return degrees;
}

json RunReport::ToJson() const {
  json phases = json::object();
  for (const auto& [name, value] : phase_ms) phases[name] = value;
  json file_map = json::object();
  for (const auto& [name, value] : files) file_map[name] = value;
  json accounting = nullptr;
  if (comm.num_devices > 0) {
    const auto a = CommAccountingReport(comm);
    accounting = {
        {"training_rounds_per_device_per_epoch", a.training_rounds_per_device_per_epoch},
        {"exchanges_per_device_per_epoch", a.exchanges_per_device_per_epoch},
        {"total_rounds_per_device", a.total_rounds_per_device},
    };
  }
  return {
      {"mode", mode},
      {"metric", metric},
      {"final", MetricsJson(final_metrics)},
      {"best_validation", MetricsJson(best_validation)},
      {"best_epoch", best_epoch},
      {"epochs_run", epochs_run},
      {"graph", {{"devices", num_devices}, {"edges", num_edges}, {"max_degree", max_degree}}},
      {"workload",
       {{"max", max_workload},
        {"best_seen_max", best_workload},
        {"total", total_workload},
        {"tree_nodes", tree_nodes},
        {"orphans", orphans},
        {"cdf", CdfJson(workload_cdf)},
        {"degree_cdf", CdfJson(degree_cdf)}}},
      {"communication",
       {{"secure_comparisons", comm.secure_comparisons},
        {"server_messages", comm.server_messages},
        {"state_updates", comm.state_updates},
        {"feature_messages", comm.feature_messages},
        {"embedding_exchanges", comm.embedding_exchanges},
        {"embedding_exchanges_per_epoch", epoch_exchanges},
        {"loss_messages", comm.loss_messages},
        {"embedding_requests", comm.embedding_requests},
        {"total", comm.total()},
        {"per_device", accounting}}},
      {"privacy",
       {{"comparisons", privacy_comparisons},
        {"comparison_bits", privacy_bits},
        {"ledger_truncated", privacy_ledger_truncated},
        {"encodings", encodings},
        {"max_budget_deviation", max_budget_deviation}}},
      {"timing_ms", phases},
      {"files", file_map},
  };
}

// ---------------------------------------------------------------------------
// Phases

SplitRatios DefaultSplitRatios(TaskMode mode) {
  if (mode == TaskMode::kSupervised) return {0.5, 0.25, 0.25};
  return {0.8, 0.05, 0.15};
}

GlobalGraph StructureGraph(const GlobalGraph& graph, const SplitSpec& split) {
  if (split.mode == SplitMode::kSupervised) return graph;
  return graph.WithEdges(TrainingEdges(graph, split));
}

GlobalGraph LoadRunGraph(const RunConfig& config) {
  LoadOptions options;
  options.bounds = {config.feature_lower, config.feature_upper};
  options.rescale = config.rescale_features;
  return LoadGraph(config.dataset.edges, config.dataset.features, config.dataset.labels, options);
}

BalanceResult RunBalancePhase(const GlobalGraph& structure, const RunConfig& config,
                              SecureChannel& channel) {
  if (config.ablation.no_trim) {
    BalanceResult result;
    result.selection = FullSelection(structure);
    result.best = result.selection;
    result.best_objective = Objective(result.selection);
    return result;
  }
  const auto init = GreedyInit(structure, channel);
  McmcConfig mcmc;
  mcmc.iterations = config.mcmc_iters;
  mcmc.seed = config.seed;
  mcmc.threads = config.threads;
  auto result = Balance(structure, init, mcmc, channel);
  result.comparisons += 2 * structure.num_edges();
  return result;
}

EncodeOutput RunEncodePhase(const GlobalGraph& graph, const NeighborSelection& selection,
                            const RunConfig& config, std::ostream* audit) {
  const std::size_t n = graph.num_vertices();
  // receivers[v]: devices whose tree holds a leaf for v.
  std::vector<std::vector<VertexId>> receivers(n);
  for (VertexId w = 0; w < n; ++w) {
    for (VertexId v : selection.retained(w)) receivers[v].push_back(w);
  }
  EncodeOutput out;
  const auto d = static_cast<std::size_t>(graph.features().cols());
  const auto& bounds = graph.bounds();
  for (VertexId u = 0; u < n; ++u) {
    if (receivers[u].empty()) continue;
    auto rng = MakeStream(config.seed, "ldp/encode", u);
    const std::span<const double> x(graph.features().data() + static_cast<std::size_t>(u) * d, d);
    const auto encoding = EncodeSender(u, x, receivers[u].size(), config.epsilon, bounds, rng);
    ++out.encode_calls;
    out.budget.Record(encoding);
    for (std::size_t k = 0; k < receivers[u].size(); ++k) {
      out.exchange.Add(u, receivers[u][k], RecoverSparse(encoding, k, bounds));
      if (audit != nullptr) WriteEncodedCsv(*audit, encoding.Message(k), receivers[u][k]);
    }
  }
  return out;
}

void WriteEpochsCsv(std::ostream& out, std::span<const EpochMetrics> epochs,
                    std::span<const std::uint64_t> comm_rounds) {
  out << "epoch,loss,train_metric,val_metric,test_metric,comm_rounds,wall_ms\n";
  for (std::size_t i = 0; i < epochs.size(); ++i) {
    const auto& e = epochs[i];
    out << e.epoch << ',' << e.loss << ',' << e.train_metric << ',' << e.val_metric << ','
        << e.test_metric << ',' << (i < comm_rounds.size() ? comm_rounds[i] : 0) << ','
        << e.wall_ms << '\n';
  }
}

void WriteCdfCsv(std::ostream& out, std::span<const CdfPoint> trimmed,
                 std::span<const CdfPoint> untrimmed) {
  out << "series,workload,cumulative_fraction\n";
  for (const auto& p : trimmed) out << "trimmed," << p.workload << ',' << p.fraction << '\n';
  for (const auto& p : untrimmed) out << "untrimmed," << p.workload << ',' << p.fraction << '\n';
}

// ---------------------------------------------------------------------------
// Pipeline

RunReport RunPipeline(const RunConfig& config, const GlobalGraph* preloaded, RunTrace* trace) {
  config.Validate(preloaded == nullptr);
  RunReport report;
  auto& timing = report.phase_ms;
  report.mode = TaskModeName(config.mode);
  report.metric = config.mode == TaskMode::kSupervised ? "accuracy" : "roc_auc";

  std::optional<GlobalGraph> loaded;
  if (preloaded == nullptr) {
    loaded.emplace(RunPhase("load", timing, [&] { return LoadRunGraph(config); }));
  }
  const GlobalGraph& graph = preloaded != nullptr ? *preloaded : *loaded;
  report.num_devices = graph.num_vertices();
  report.num_edges = graph.num_edges();

  SplitSpec split;
  const GlobalGraph structure = RunPhase("split", timing, [&] {
    if (config.mode == TaskMode::kSupervised && graph.labels().empty()) {
      throw Error(ErrorCode::kInvalidArgument, "supervised mode needs vertex labels");
    }
    const auto split_mode =
        config.mode == TaskMode::kSupervised ? SplitMode::kSupervised : SplitMode::kUnsupervised;
    split = MakeSplit(graph, split_mode, DefaultSplitRatios(config.mode), config.seed);
    return StructureGraph(graph, split);
  });
  report.max_degree = structure.max_degree();

  PrivacyLedger privacy(config.privacy_transcript_limit);
  ChannelOptions channel_options;
  channel_options.bit_width = config.bit_width;
  SecureChannel channel(privacy, channel_options);
  BalanceResult balance =
      RunPhase("balance", timing, [&] { return RunBalancePhase(structure, config, channel); });
  const NeighborSelection& selection = balance.selection;
  CommLedger& comm = report.comm;
  comm.num_devices = graph.num_vertices();
  comm.secure_comparisons = privacy.total_comparisons();
  comm.server_messages = balance.server_messages;
  comm.state_updates = balance.state_updates;

  const auto trees = RunPhase("construct", timing, [&] {
    std::vector<DeviceTree> out;
    out.reserve(graph.num_vertices());
    for (VertexId u = 0; u < graph.num_vertices(); ++u) {
      out.push_back(BuildTree(u, selection.retained(u)));
    }
    return out;
  });
  for (const auto& t : trees) report.tree_nodes += t.num_nodes();

  EncodeOutput encoded =
      RunPhase("encode", timing, [&] { return RunEncodePhase(graph, selection, config); });
  comm.feature_messages = encoded.exchange.size();

  const auto train_config = config.ToTrainConfig();
  std::optional<SupervisedTask> supervised;
  std::optional<LinkTask> link;
  TrainingLayout layout;
  std::vector<EpochMetrics> epochs;
  std::vector<std::uint64_t> epoch_rounds;
  std::optional<Trainer> trainer;
  RunPhase("train", timing, [&] {
    layout = config.ablation.no_virtual_nodes
                 ? BuildEgoLayout(selection, encoded.exchange)
                 : BuildTreeLayout(graph.num_vertices(), trees, encoded.exchange);
    std::uint64_t loss_senders = 0;
    if (config.mode == TaskMode::kSupervised) {
      supervised.emplace(MakeSupervisedTask(graph, split));
      loss_senders = supervised->train.size();
    } else {
      link.emplace(MakeLinkTask(graph, split, selection, config.seed));
      std::vector<char> active(graph.num_vertices(), 0);
      for (const auto& p : link->train_positives) active[p.device] = 1;
      loss_senders = static_cast<std::uint64_t>(std::count(active.begin(), active.end(), 1));
    }
    trainer.emplace(layout, graph.features(), config.mode, train_config,
                    supervised ? &*supervised : nullptr, link ? &*link : nullptr);
    const std::uint64_t exchanges = 2 * layout.CrossDeviceCopies();
    report.epoch_exchanges = exchanges;
    double best_val = -std::numeric_limits<double>::infinity();
    for (std::size_t e = 0; e < config.epochs; ++e) {
      const auto m = trainer->TrainEpoch();
      std::uint64_t requests = 0;
      if (link) requests = link->train_positives.size() + trainer->negatives_last_epoch();
      comm.embedding_exchanges += exchanges;
      comm.loss_messages += loss_senders;
      comm.embedding_requests += requests;
      ++comm.epochs;
      epoch_rounds.push_back(exchanges + loss_senders + requests);
      epochs.push_back(m);
      if (m.val_metric > best_val) {
        best_val = m.val_metric;
        report.best_epoch = m.epoch;
        report.best_validation = {m.train_metric, m.val_metric, m.test_metric};
      }
    }
    return 0;
  });

  RunPhase("evaluate", timing, [&] {
    report.final_metrics = trainer->Evaluate();
    if (epochs.empty()) report.best_validation = report.final_metrics;
    return 0;
  });

  report.epochs_run = epochs.size();
  report.max_workload = Objective(selection);
  report.best_workload = balance.best_objective;
  report.total_workload = selection.total_workload();
  report.orphans = layout.Orphans().size();
  report.privacy_comparisons = privacy.total_comparisons();
  report.privacy_bits = privacy.total_bits();
  report.privacy_ledger_truncated = privacy.truncated();
  report.encodings = encoded.budget.total_encodings();
  std::vector<double> spent;
  for (VertexId s : encoded.budget.senders()) {
    spent.push_back(encoded.budget.spent(s));
    report.max_budget_deviation =
        std::max(report.max_budget_deviation, std::abs(spent.back() - config.epsilon));
  }
  const auto workloads = selection.workloads();
  const auto degrees = DegreeSequence(structure);
  report.workload_cdf = WorkloadCdf(workloads);
  report.degree_cdf = WorkloadCdf(degrees);

  if (!config.out_dir.empty()) {
    RunPhase("report", timing, [&] {
      const std::filesystem::path dir(config.out_dir);
      std::filesystem::create_directories(dir);
      auto record = [&](const std::string& name) {
        const auto path = dir / name;
        report.files[name] = path.string();
        return OpenOutput(path);
      };
      record("config.json") << config.ToJson().dump(2) << '\n';
      {
        auto out = record("epochs.csv");
        WriteEpochsCsv(out, epochs, epoch_rounds);
      }
      {
        auto out = record("workload_cdf.csv");
        WriteCdfCsv(out, report.workload_cdf, report.degree_cdf);
      }
      {
        auto out = record("comm_ledger.csv");
        comm.WriteCsv(out);
      }
      {
        auto out = record("privacy_ledger.csv");
        privacy.WriteCsv(out);
      }
      {
        auto out = record("telemetry.csv");
        WriteTelemetryCsv(out, balance.telemetry);
      }
      report.files["run_report.json"] = (dir / "run_report.json").string();
      OpenOutput(dir / "run_report.json") << report.ToJson().dump(2) << '\n';
      return 0;
    });
  }

  if (trace != nullptr) {
    trace->balance = std::move(balance);
    trace->epochs = std::move(epochs);
    trace->encode_calls = encoded.encode_calls;
    trace->budget_spent = std::move(spent);
    trace->feature_messages = encoded.exchange.size();
  }
  return report;
}

RunReport RunBaseline(const RunConfig& config, const GlobalGraph* preloaded) {
  config.Validate(preloaded == nullptr);
  RunReport report;
  auto& timing = report.phase_ms;
  report.mode = TaskModeName(config.mode);
  report.metric = config.mode == TaskMode::kSupervised ? "accuracy" : "roc_auc";

  std::optional<GlobalGraph> loaded;
  if (preloaded == nullptr) {
    loaded.emplace(RunPhase("load", timing, [&] { return LoadRunGraph(config); }));
  }
  const GlobalGraph& graph = preloaded != nullptr ? *preloaded : *loaded;
  report.num_devices = graph.num_vertices();
  report.num_edges = graph.num_edges();
  report.max_degree = graph.max_degree();

  const auto split = RunPhase("split", timing, [&] {
    const auto split_mode =
        config.mode == TaskMode::kSupervised ? SplitMode::kSupervised : SplitMode::kUnsupervised;
    return MakeSplit(graph, split_mode, DefaultSplitRatios(config.mode), config.seed);
  });
  const auto result = RunPhase("train", timing, [&] {
    return CentralizedBaseline(graph, split, config.ToTrainConfig());
  });
  report.final_metrics = result.final_metrics;
  report.best_validation = result.best_validation;
  report.best_epoch = result.best_epoch;
  report.epochs_run = result.epochs.size();

  if (!config.out_dir.empty()) {
    RunPhase("report", timing, [&] {
      const std::filesystem::path dir(config.out_dir);
      std::filesystem::create_directories(dir);
      report.files["baseline_epochs.csv"] = (dir / "baseline_epochs.csv").string();
      {
        auto out = OpenOutput(dir / "baseline_epochs.csv");
        WriteEpochsCsv(out, result.epochs, {});
      }
      report.files["baseline_report.json"] = (dir / "baseline_report.json").string();
      OpenOutput(dir / "baseline_report.json") << report.ToJson().dump(2) << '\n';
      return 0;
    });
  }
  return report;
}

}  // namespace fedtree
