#include "fedtree/runtime.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "fedtree/balancer.h"
#include "fedtree/error.h"
#include "support/synthetic.h"

namespace fedtree {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

ErrorCode ConfigCode(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::kIo;
}

fs::path FreshDir(const std::string& name) {
  const auto dir = fs::path(::testing::TempDir()) / ("fedtree_runtime_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<std::string> ReadLines(const fs::path& path) {
  std::ifstream in(path);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  return lines;
}

TEST(RunConfigTest, DefaultsRoundTripThroughJson) {
  const RunConfig defaults;
  const auto doc = defaults.ToJson();
  EXPECT_EQ(doc["epsilon"], 2.0);
  EXPECT_EQ(doc["mcmc_iters"], 300);
  EXPECT_EQ(doc["epochs"], 300);
  EXPECT_EQ(doc["lr"], 0.01);
  EXPECT_EQ(doc["hidden_dim"], 16);
  EXPECT_EQ(doc["dropout"], 0.01);
  EXPECT_EQ(doc["neg_samples"], 1);
  EXPECT_EQ(doc["mode"], "supervised");
  const auto back = RunConfig::FromJson(doc);
  EXPECT_EQ(back.ToJson(), doc);
}

TEST(RunConfigTest, PartialDocumentKeepsDefaults) {
  const auto c = RunConfig::FromJson(json{{"mode", "unsupervised"}, {"ablation", {{"no_trim", true}}}});
  EXPECT_EQ(c.mode, TaskMode::kUnsupervised);
  EXPECT_TRUE(c.ablation.no_trim);
  EXPECT_FALSE(c.ablation.no_virtual_nodes);
  EXPECT_EQ(c.epochs, 300u);
}

TEST(RunConfigTest, RejectsUnknownKeysAndBadTypes) {
  EXPECT_EQ(ConfigCode([] { RunConfig::FromJson(json{{"epsilom", 1.0}}); }), ErrorCode::kConfigError);
  EXPECT_EQ(ConfigCode([] { RunConfig::FromJson(json{{"ablation", {{"trim", true}}}}); }),
            ErrorCode::kConfigError);
  EXPECT_EQ(ConfigCode([] { RunConfig::FromJson(json{{"epochs", "many"}}); }),
            ErrorCode::kConfigError);
  EXPECT_EQ(ConfigCode([] { RunConfig::FromJson(json{{"mode", "semi"}}); }),
            ErrorCode::kConfigError);
  EXPECT_EQ(ConfigCode([] { RunConfig::FromJson(json::array()); }), ErrorCode::kConfigError);
}

TEST(RunConfigTest, ValidateRejectsOutOfRangeValues) {
  RunConfig c;
  EXPECT_EQ(ConfigCode([&] { c.Validate(); }), ErrorCode::kConfigError);  // no dataset
  EXPECT_NO_THROW(c.Validate(false));
  c.epsilon = 0.0;
  EXPECT_THROW(c.Validate(false), Error);
  c = RunConfig{};
  c.dropout = 1.0;
  EXPECT_THROW(c.Validate(false), Error);
  c = RunConfig{};
  c.feature_lower = 1.0;
  EXPECT_THROW(c.Validate(false), Error);
  c = RunConfig{};
  c.dataset.edges = "e.csv";
  c.dataset.features = "f.csv";
  EXPECT_THROW(c.Validate(), Error);  // supervised needs labels
  c.mode = TaskMode::kUnsupervised;
  EXPECT_NO_THROW(c.Validate());
}

TEST(OverrideTest, TypedByKey) {
  json doc = json::object();
  ApplyOverride(doc, "ablation.no_trim=true");
  ApplyOverride(doc, "epsilon=0.5");
  ApplyOverride(doc, "epochs=12");
  ApplyOverride(doc, "mode=unsupervised");
  ApplyOverride(doc, "dataset.edges=a,b.csv");
  const auto c = RunConfig::FromJson(doc);
  EXPECT_TRUE(c.ablation.no_trim);
  EXPECT_DOUBLE_EQ(c.epsilon, 0.5);
  EXPECT_EQ(c.epochs, 12u);
  EXPECT_EQ(c.mode, TaskMode::kUnsupervised);
  EXPECT_EQ(c.dataset.edges, "a,b.csv");
}

TEST(OverrideTest, RejectsUnknownKeysAndBadValues) {
  json doc = json::object();
  EXPECT_EQ(ConfigCode([&] { ApplyOverride(doc, "nope=1"); }), ErrorCode::kConfigError);
  EXPECT_EQ(ConfigCode([&] { ApplyOverride(doc, "epochs=ten"); }), ErrorCode::kConfigError);
  EXPECT_EQ(ConfigCode([&] { ApplyOverride(doc, "epochs=1.5"); }), ErrorCode::kConfigError);
  EXPECT_EQ(ConfigCode([&] { ApplyOverride(doc, "ablation.no_trim=maybe"); }),
            ErrorCode::kConfigError);
  EXPECT_EQ(ConfigCode([&] { ApplyOverride(doc, "epochs"); }), ErrorCode::kConfigError);
}

TEST(ConfigKeysTest, CoversSchema) {
  const auto keys = ConfigKeys();
  for (const char* k : {"dataset.edges", "dataset.features", "dataset.labels", "mode", "epsilon",
                        "mcmc_iters", "epochs", "lr", "hidden_dim", "dropout", "neg_samples", "seed",
                        "ablation.no_trim", "ablation.no_virtual_nodes", "out_dir", "threads"}) {
    EXPECT_NE(std::find(keys.begin(), keys.end(), k), keys.end()) << k;
  }
}

TEST(ReadConfigFileTest, MissingFileNamesPath) {
  try {
    ReadConfigFile("/nonexistent/cfg.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kConfigError);
    EXPECT_NE(std::string(e.what()).find("/nonexistent/cfg.json"), std::string::npos);
  }
  const auto dir = FreshDir("badjson");
  std::ofstream(dir / "c.json") << "{ not json";
  EXPECT_EQ(ConfigCode([&] { ReadConfigFile(dir / "c.json"); }), ErrorCode::kConfigError);
}

TEST(WorkloadCdfTest, DistinctPointsAscending) {
  const std::vector<std::size_t> w = {1, 1, 3};
  const auto cdf = WorkloadCdf(w);
  ASSERT_EQ(cdf.size(), 2u);
  EXPECT_EQ(cdf[0].workload, 1u);
  EXPECT_NEAR(cdf[0].fraction, 2.0 / 3.0, 1e-12);
  EXPECT_EQ(cdf[1].workload, 3u);
  EXPECT_DOUBLE_EQ(cdf[1].fraction, 1.0);
  EXPECT_TRUE(WorkloadCdf({}).empty());
}

TEST(CommAccountingTest, EmptyLedgerIsAnError) {
  const CommLedger empty;
  EXPECT_EQ(ConfigCode([&] { CommAccountingReport(empty); }), ErrorCode::kEmptyReport);
}

TEST(CommAccountingTest, PerDeviceRates) {
  CommLedger ledger;
  ledger.num_devices = 4;
  ledger.epochs = 2;
  ledger.embedding_exchanges = 16;
  ledger.loss_messages = 8;
  ledger.secure_comparisons = 40;
  const auto a = CommAccountingReport(ledger);
  EXPECT_DOUBLE_EQ(a.exchanges_per_device_per_epoch, 2.0);
  EXPECT_DOUBLE_EQ(a.training_rounds_per_device_per_epoch, 3.0);
  EXPECT_DOUBLE_EQ(a.total_rounds_per_device, 16.0);
  EXPECT_DOUBLE_EQ(ExchangeReduction(30, 100), 0.7);
  EXPECT_DOUBLE_EQ(ExchangeReduction(0, 0), 0.0);
}

TEST(EpochExchangeCountTest, TwiceTheWorkloadAndMatchesLeafCopies) {
  auto rng = MakeStream(9, "test/exchange");
  for (int trial = 0; trial < 20; ++trial) {
    const auto g = testing::RandomGraph(25, 0.2, rng);
    const auto full = FullSelection(g);
    EXPECT_EQ(EpochExchangeCount(full), 4 * g.num_edges());
    NeighborSelection partial(g.num_vertices());
    for (const auto& e : g.edges()) {
      if (UniformUnit(rng) < 0.5) {
        partial.insert(e.first, e.second);
      } else {
        partial.insert(e.second, e.first);
      }
    }
    EXPECT_EQ(EpochExchangeCount(partial), 2 * g.num_edges());
  }
}

class PipelineTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    testing::SyntheticSpec spec;
    spec.num_vertices = 300;
    spec.feature_dim = 16;
    spec.seed = 11;
    graph_ = new GlobalGraph(testing::MakeSyntheticGraph(spec));
  }
  static void TearDownTestSuite() {
    delete graph_;
    graph_ = nullptr;
  }

  static RunConfig SmallConfig(TaskMode mode, const std::string& out) {
    RunConfig c;
    c.mode = mode;
    c.epochs = 8;
    c.mcmc_iters = 40;
    c.seed = 3;
    c.out_dir = out.empty() ? "" : FreshDir(out).string();
    return c;
  }

  static GlobalGraph* graph_;
};

GlobalGraph* PipelineTest::graph_ = nullptr;

TEST_F(PipelineTest, SupervisedRunWritesEveryArtifact) {
  const auto config = SmallConfig(TaskMode::kSupervised, "sup");
  RunTrace trace;
  const auto report = RunPipeline(config, graph_, &trace);
  for (const char* name : {"config.json", "epochs.csv", "workload_cdf.csv", "comm_ledger.csv",
                           "privacy_ledger.csv", "telemetry.csv", "run_report.json"}) {
    ASSERT_TRUE(report.files.count(name)) << name;
    EXPECT_TRUE(fs::exists(report.files.at(name))) << name;
  }
  const auto epochs = ReadLines(report.files.at("epochs.csv"));
  ASSERT_EQ(epochs.size(), 9u);
  EXPECT_EQ(epochs[0], "epoch,loss,train_metric,val_metric,test_metric,comm_rounds,wall_ms");
  EXPECT_EQ(ReadLines(report.files.at("comm_ledger.csv"))[0], "phase,counter,value");
  EXPECT_EQ(ReadLines(report.files.at("workload_cdf.csv"))[0],
            "series,workload,cumulative_fraction");

  std::ifstream in(report.files.at("run_report.json"));
  const auto doc = json::parse(in);
  EXPECT_EQ(doc["metric"], "accuracy");
  EXPECT_EQ(doc["epochs_run"], 8);

  std::ifstream cin(report.files.at("config.json"));
  EXPECT_EQ(RunConfig::FromJson(json::parse(cin)).ToJson(), config.ToJson());
  EXPECT_EQ(trace.epochs.size(), 8u);
  EXPECT_EQ(report.metric, "accuracy");
  EXPECT_GE(report.final_metrics.test, 0.0);
  EXPECT_LE(report.final_metrics.test, 1.0);
}

TEST_F(PipelineTest, EncodesOncePerSenderWithExactBudget) {
  for (TaskMode mode : {TaskMode::kSupervised, TaskMode::kUnsupervised}) {
    RunTrace trace;
    const auto report = RunPipeline(SmallConfig(mode, ""), graph_, &trace);
    EXPECT_EQ(trace.encode_calls, trace.budget_spent.size());
    EXPECT_EQ(report.encodings, trace.encode_calls);
    for (double spent : trace.budget_spent) EXPECT_NEAR(spent, 2.0, 1e-9);
    EXPECT_LE(report.max_budget_deviation, 1e-9);
    EXPECT_EQ(report.comm.feature_messages, trace.feature_messages);
    EXPECT_EQ(trace.feature_messages, report.total_workload);
  }
}

TEST_F(PipelineTest, LedgersAgreeWithBalanceAndTraining) {
  RunTrace trace;
  const auto config = SmallConfig(TaskMode::kSupervised, "");
  const auto report = RunPipeline(config, graph_, &trace);
  EXPECT_EQ(report.privacy_comparisons, trace.balance.comparisons);
  EXPECT_EQ(report.comm.secure_comparisons, report.privacy_comparisons);
  EXPECT_EQ(report.epoch_exchanges, EpochExchangeCount(trace.balance.selection));
  EXPECT_EQ(report.epoch_exchanges, 2 * report.total_workload);
  EXPECT_EQ(report.comm.embedding_exchanges, config.epochs * report.epoch_exchanges);
  const auto split = MakeSplit(*graph_, SplitMode::kSupervised, DefaultSplitRatios(config.mode),
                               config.seed);
  EXPECT_EQ(report.comm.loss_messages, config.epochs * split.count(SplitPart::kTrain));
  EXPECT_EQ(report.comm.embedding_requests, 0u);
  EXPECT_EQ(report.max_workload, Objective(trace.balance.selection));
  EXPECT_TRUE(SatisfiesCoverage(*graph_, trace.balance.selection));
  EXPECT_LE(report.max_workload, report.max_degree);
}

TEST_F(PipelineTest, LinkModeTrainsOnTrainingEdgesOnly) {
  RunTrace trace;
  const auto config = SmallConfig(TaskMode::kUnsupervised, "");
  const auto report = RunPipeline(config, graph_, &trace);
  EXPECT_EQ(report.metric, "roc_auc");
  const auto split = MakeSplit(*graph_, SplitMode::kUnsupervised, DefaultSplitRatios(config.mode),
                               config.seed);
  const auto structure = StructureGraph(*graph_, split);
  EXPECT_EQ(structure.num_edges(), split.count(SplitPart::kTrain));
  EXPECT_TRUE(SatisfiesCoverage(structure, trace.balance.selection));
  EXPECT_TRUE(RespectsAdjacency(structure, trace.balance.selection));
  EXPECT_EQ(report.comm.embedding_requests % config.epochs, 0u);
  EXPECT_GT(report.comm.embedding_requests, 0u);
}

TEST_F(PipelineTest, SameSeedSameResult) {
  const auto config = SmallConfig(TaskMode::kSupervised, "");
  RunTrace a_trace;
  RunTrace b_trace;
  const auto a = RunPipeline(config, graph_, &a_trace);
  const auto b = RunPipeline(config, graph_, &b_trace);
  EXPECT_EQ(a_trace.balance.selection.workloads(), b_trace.balance.selection.workloads());
  ASSERT_EQ(a_trace.epochs.size(), b_trace.epochs.size());
  for (std::size_t i = 0; i < a_trace.epochs.size(); ++i) {
    EXPECT_EQ(a_trace.epochs[i].loss, b_trace.epochs[i].loss);
  }
  EXPECT_EQ(a.final_metrics.test, b.final_metrics.test);
}

TEST_F(PipelineTest, NoTrimUsesEveryNeighbor) {
  auto config = SmallConfig(TaskMode::kSupervised, "");
  config.ablation.no_trim = true;
  config.epochs = 2;
  RunTrace trace;
  const auto report = RunPipeline(config, graph_, &trace);
  EXPECT_EQ(report.max_workload, graph_->max_degree());
  EXPECT_EQ(report.total_workload, 2 * graph_->num_edges());
  EXPECT_EQ(report.privacy_comparisons, 0u);
  EXPECT_TRUE(trace.balance.telemetry.empty());
}

TEST_F(PipelineTest, ZeroIterationsKeepsGreedySelection) {
  auto config = SmallConfig(TaskMode::kSupervised, "");
  config.mcmc_iters = 0;
  config.epochs = 1;
  RunTrace trace;
  RunPipeline(config, graph_, &trace);
  PrivacyLedger ledger;
  SecureChannel channel(ledger);
  const auto greedy = GreedyInit(*graph_, channel);
  for (VertexId u = 0; u < graph_->num_vertices(); ++u) {
    const auto a = trace.balance.selection.retained(u);
    const auto b = greedy.retained(u);
    EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin(), b.end())) << "vertex " << u;
  }
}

TEST_F(PipelineTest, NoVirtualNodesAblationRuns) {
  auto config = SmallConfig(TaskMode::kSupervised, "");
  config.ablation.no_virtual_nodes = true;
  const auto report = RunPipeline(config, graph_);
  EXPECT_EQ(report.epochs_run, config.epochs);
  EXPECT_EQ(report.epoch_exchanges, 2 * report.total_workload);
}

TEST_F(PipelineTest, ZeroEpochsStillEvaluates) {
  auto config = SmallConfig(TaskMode::kSupervised, "");
  config.epochs = 0;
  const auto report = RunPipeline(config, graph_);
  EXPECT_EQ(report.epochs_run, 0u);
  EXPECT_EQ(report.comm.embedding_exchanges, 0u);
}

TEST_F(PipelineTest, BaselineIsDeterministic) {
  auto config = SmallConfig(TaskMode::kSupervised, "");
  const auto a = RunBaseline(config, graph_);
  const auto b = RunBaseline(config, graph_);
  EXPECT_EQ(a.final_metrics.test, b.final_metrics.test);
  EXPECT_EQ(a.epochs_run, config.epochs);
}

TEST(PipelineErrorTest, PhaseTagged) {
  RunConfig config;
  config.dataset = {"/nonexistent/edges.csv", "/nonexistent/features.csv",
                    "/nonexistent/labels.csv"};
  config.out_dir = "";
  try {
    RunPipeline(config);
    FAIL();
  } catch (const PhaseError& e) {
    EXPECT_EQ(e.phase(), "load");
    EXPECT_NE(std::string(e.what()).find("phase 'load'"), std::string::npos);
  }

  const auto unlabeled = GlobalGraph::Create(3, {{0, 1}, {1, 2}}, Matrix::Zero(3, 2), {});
  try {
    RunPipeline(config, &unlabeled);
    FAIL();
  } catch (const PhaseError& e) {
    EXPECT_EQ(e.phase(), "split");
  }
}

TEST(PipelineFilesTest, LoadsCsvDataset) {
  testing::SyntheticSpec spec;
  spec.num_vertices = 120;
  spec.feature_dim = 8;
  const auto graph = testing::MakeSyntheticGraph(spec);
  const auto dir = FreshDir("csv");
  testing::WriteDatasetCsv(graph, dir);
  RunConfig config;
  config.dataset = {(dir / "edges.csv").string(), (dir / "features.csv").string(),
                    (dir / "labels.csv").string()};
  config.epochs = 3;
  config.mcmc_iters = 10;
  config.out_dir = (dir / "out").string();
  const auto report = RunPipeline(config);
  EXPECT_EQ(report.num_devices, 120u);
  EXPECT_EQ(report.num_edges, graph.num_edges());
  EXPECT_TRUE(fs::exists(dir / "out" / "run_report.json"));
}

}  // namespace
}  // namespace fedtree
