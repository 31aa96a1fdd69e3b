#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "fedtree/balancer.h"
#include "fedtree/graph.h"
#include "fedtree/secure_channel.h"
#include "support/synthetic.h"

namespace fedtree {
namespace {

namespace fs = std::filesystem;

struct CliResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::string Slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path FreshDir(const std::string& name) {
  const auto dir = fs::path(::testing::TempDir()) / ("fedtree_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

CliResult RunCli(const std::string& args) {
  const auto dir = fs::path(::testing::TempDir());
  const auto out = dir / "fedtree_cli_stdout.txt";
  const auto err = dir / "fedtree_cli_stderr.txt";
  const std::string cmd = std::string(FEDTREE_CLI_PATH) + " " + args + " >" + out.string() +
                          " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  CliResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = Slurp(out);
  r.err = Slurp(err);
  return r;
}

// Small labelled dataset on disk plus a config pointing at it.
struct Fixture {
  fs::path dir;
  fs::path config;
};

Fixture MakeFixture(const std::string& name) {
  Fixture f;
  f.dir = FreshDir(name);
  testing::SyntheticSpec spec;
  spec.num_vertices = 150;
  spec.feature_dim = 8;
  spec.seed = 21;
  testing::WriteDatasetCsv(testing::MakeSyntheticGraph(spec), f.dir / "data");
  f.config = f.dir / "config.json";
  std::ofstream(f.config) << "{\n"
                          << "  \"dataset\": {\"edges\": \"" << (f.dir / "data/edges.csv").string()
                          << "\", \"features\": \"" << (f.dir / "data/features.csv").string()
                          << "\", \"labels\": \"" << (f.dir / "data/labels.csv").string()
                          << "\"},\n"
                          << "  \"epochs\": 3,\n  \"mcmc_iters\": 30,\n  \"seed\": 5\n}\n";
  return f;
}

std::string Set(const fs::path& out) { return " --set out_dir=" + out.string(); }

TEST(CliTest, HelpListsSubcommandsAndFlags) {
  const auto top = RunCli("--help");
  EXPECT_EQ(top.exit_code, 0);
  for (const char* sub : {"run", "baseline", "balance", "trees", "encode-audit", "cdf", "oracle"}) {
    EXPECT_NE(top.out.find(sub), std::string::npos) << sub;
  }
  const auto run = RunCli("run --help");
  EXPECT_EQ(run.exit_code, 0);
  const std::string readme = Slurp(fs::path(FEDTREE_SOURCE_DIR) / "README.md");
  for (const char* flag : {"--config", "--set", "--threads"}) {
    EXPECT_NE(run.out.find(flag), std::string::npos) << flag;
    EXPECT_NE(readme.find(flag), std::string::npos) << "README lacks " << flag;
  }
  const auto trees = RunCli("trees --help");
  EXPECT_NE(trees.out.find("--dot"), std::string::npos);
  EXPECT_NE(readme.find("--dot"), std::string::npos);
}

TEST(CliTest, UsageErrorsExitTwo) {
  EXPECT_EQ(RunCli("").exit_code, 2);
  EXPECT_EQ(RunCli("frobnicate").exit_code, 2);
  EXPECT_EQ(RunCli("run --bogus").exit_code, 2);
  EXPECT_EQ(RunCli("run --threads 0").exit_code, 2);
}

TEST(CliTest, MissingConfigNamesPath) {
  const auto r = RunCli("run --config /nonexistent/fedtree.json");
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.err.find("/nonexistent/fedtree.json"), std::string::npos) << r.err;
}

TEST(CliTest, BadOverridesExitTwo) {
  const auto f = MakeFixture("bad_override");
  EXPECT_EQ(RunCli("run --config " + f.config.string() + " --set nosuch=1").exit_code, 2);
  EXPECT_EQ(RunCli("run --config " + f.config.string() + " --set epochs=abc").exit_code, 2);
  EXPECT_EQ(RunCli("run --config " + f.config.string() + " --set dropout=1.5").exit_code, 2);
}

TEST(CliTest, MissingDatasetIsAPhaseError) {
  const auto r = RunCli("run --set dataset.edges=/nonexistent/e.csv --set "
                        "dataset.features=/nonexistent/f.csv --set dataset.labels=/nonexistent/l.csv");
  EXPECT_EQ(r.exit_code, 3);
  EXPECT_NE(r.err.find("phase 'load'"), std::string::npos) << r.err;
}

TEST(CliTest, OracleExamples) {
  const auto dir = FreshDir("oracle");
  std::ofstream(dir / "triangle.csv") << "0,1\n1,2\n0,2\n";
  std::ofstream(dir / "k4.csv") << "0,1\n0,2\n0,3\n1,2\n1,3\n2,3\n";
  {
    std::ofstream big(dir / "big.csv");
    for (int i = 0; i < 30; ++i) big << i << ',' << i + 1 << '\n';
  }
  const auto tri = RunCli("oracle " + (dir / "triangle.csv").string());
  EXPECT_EQ(tri.exit_code, 0);
  EXPECT_EQ(tri.out.rfind("optimum 1\n", 0), 0u) << tri.out;
  const auto k4 = RunCli("oracle " + (dir / "k4.csv").string());
  EXPECT_EQ(k4.exit_code, 0);
  EXPECT_EQ(k4.out.rfind("optimum 2\n", 0), 0u) << k4.out;
  const auto big = RunCli("oracle " + (dir / "big.csv").string());
  EXPECT_EQ(big.exit_code, 3);
  EXPECT_FALSE(big.err.empty());
}

TEST(CliTest, BalanceWithZeroIterationsEqualsGreedy) {
  const auto f = MakeFixture("greedy");
  const auto out = f.dir / "out";
  const auto r = RunCli("balance --config " + f.config.string() + Set(out) + " --set mcmc_iters=0");
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const auto graph = LoadGraph(f.dir / "data/edges.csv", f.dir / "data/features.csv",
                               f.dir / "data/labels.csv", {});
  PrivacyLedger ledger;
  SecureChannel channel(ledger);
  std::ostringstream expected;
  WriteSelectionCsv(expected, GreedyInit(graph, channel));
  EXPECT_EQ(Slurp(out / "selection.csv"), expected.str());
}

TEST(CliTest, RerunsAreByteIdentical) {
  const auto f = MakeFixture("rerun");
  std::vector<std::string> first;
  for (int pass = 0; pass < 2; ++pass) {
    const auto out = f.dir / ("out" + std::to_string(pass));
    ASSERT_EQ(RunCli("balance --config " + f.config.string() + Set(out)).exit_code, 0);
    ASSERT_EQ(RunCli("trees --config " + f.config.string() + Set(out)).exit_code, 0);
    ASSERT_EQ(RunCli("encode-audit --config " + f.config.string() + Set(out)).exit_code, 0);
    ASSERT_EQ(RunCli("cdf --config " + f.config.string() + Set(out)).exit_code, 0);
    std::vector<std::string> contents;
    for (const char* name : {"selection.csv", "telemetry.csv", "trees.csv", "encoded_messages.csv",
                             "budget.csv", "workload_cdf.csv"}) {
      ASSERT_TRUE(fs::exists(out / name)) << name;
      contents.push_back(Slurp(out / name));
    }
    if (pass == 0) {
      first = contents;
    } else {
      EXPECT_EQ(contents, first);
    }
  }
  // Parallel balancing changes nothing.
  const auto out4 = f.dir / "out_threads";
  ASSERT_EQ(RunCli("balance --threads 4 --config " + f.config.string() + Set(out4)).exit_code, 0);
  EXPECT_EQ(Slurp(out4 / "selection.csv"), first[0]);
}

TEST(CliTest, RunAndBaselineWriteReports) {
  const auto f = MakeFixture("run");
  const auto out = f.dir / "out";
  const auto r = RunCli("run --config " + f.config.string() + Set(out));
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_NE(r.out.find("accuracy"), std::string::npos);
  for (const char* name : {"run_report.json", "epochs.csv", "comm_ledger.csv", "privacy_ledger.csv",
                           "workload_cdf.csv", "telemetry.csv", "config.json"}) {
    EXPECT_TRUE(fs::exists(out / name)) << name;
  }
  const auto ablation = RunCli("run --config " + f.config.string() + Set(f.dir / "abl") +
                               " --set ablation.no_trim=true --set ablation.no_virtual_nodes=true");
  EXPECT_EQ(ablation.exit_code, 0) << ablation.err;
  const auto base = RunCli("baseline --config " + f.config.string() + Set(f.dir / "base"));
  EXPECT_EQ(base.exit_code, 0) << base.err;
  EXPECT_TRUE(fs::exists(f.dir / "base" / "baseline_report.json"));
}

TEST(CliTest, TreeDot) {
  const auto f = MakeFixture("dot");
  const auto r = RunCli("trees --config " + f.config.string() + Set(f.dir / "out") + " --dot 0");
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_NE(r.out.find("graph"), std::string::npos);
  EXPECT_EQ(RunCli("trees --config " + f.config.string() + Set(f.dir / "out") + " --dot 100000")
                .exit_code,
            3);
}

}  // namespace
}  // namespace fedtree
