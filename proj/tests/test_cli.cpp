#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "lpn/commands.hpp"
#include "lpn/report.hpp"

using namespace lpn;
namespace fs = std::filesystem;

namespace {

const char* kQuickConfig = R"([network]
hidden = 8, 4
dropout = 0.0

[train]
epochs_phase1 = 40
epochs_phase2 = 3
learning_rate = 0.01

[data]
dataset = synthetic:linear-2d-dead-feature
)";

int run(std::vector<std::string> args) {
  args.insert(args.begin(), "lpn");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("lpn_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    config_ = (dir_ / "quick.ini").string();
    std::ofstream(config_) << kQuickConfig;
  }

  std::string out(const std::string& name = "out") const { return (dir_ / name).string(); }

  int train(const std::string& out_dir, const std::string& seed = "1") {
    return run({"train", "--config", config_, "--seed", seed, "--out", out_dir, "--quiet"});
  }

  static Json payload(const fs::path& p) { return read_json(p).at("payload"); }

  fs::path dir_;
  std::string config_;
};

}  // namespace

TEST_F(Cli, TrainWritesReportAndParameters) {
  ASSERT_EQ(train(out()), 0);
  const Json p = payload(fs::path(out()) / "train_report.json");
  EXPECT_EQ(p.at("command"), "train");
  EXPECT_TRUE(p.at("report").at("final").at("validation_r2").is_number());
  EXPECT_EQ(p.at("report").at("epochs").size(), 43u);
  EXPECT_EQ(p.at("seed"), 1);
  EXPECT_TRUE(fs::exists(fs::path(out()) / "params.json"));
  const Json meta = read_json(fs::path(out()) / "train_report.json").at("meta");
  EXPECT_TRUE(meta.contains("wall_clock_seconds"));
}

TEST_F(Cli, SameSeedGivesIdenticalPayloads) {
  ASSERT_EQ(train(out("a")), 0);
  ASSERT_EQ(train(out("b")), 0);
  EXPECT_EQ(payload(fs::path(out("a")) / "train_report.json"), payload(fs::path(out("b")) / "train_report.json"));
  ASSERT_EQ(train(out("c"), "2"), 0);
  EXPECT_NE(payload(fs::path(out("a")) / "train_report.json"), payload(fs::path(out("c")) / "train_report.json"));
}

TEST_F(Cli, MissingDatasetFailsWithoutOutputs) {
  std::ofstream(config_) << "[data]\ndataset = parkinsons\npath = /nonexistent/parkinsons_updrs.data\n";
  EXPECT_NE(run({"train", "--config", config_, "--out", out(), "--quiet"}), 0);
  EXPECT_TRUE(!fs::exists(out()) || fs::is_empty(out()));
}

TEST_F(Cli, BadUsageExitsWithTwo) {
  std::ofstream(config_) << "[network]\ndropout = 2\n";
  EXPECT_EQ(run({"train", "--config", config_, "--out", out()}), 2);
  EXPECT_EQ(run({"frobnicate"}), 2);
  EXPECT_EQ(run({"selfcheck", "--inject-fault", "nonsense"}), 2);
}

TEST_F(Cli, EvaluateMatchesTrainingReport) {
  ASSERT_EQ(train(out()), 0);
  ASSERT_EQ(run({"evaluate", "--config", config_, "--seed", "1", "--out", out()}), 0);
  const Json eval = payload(fs::path(out()) / "evaluate_report.json");
  const Json tr = payload(fs::path(out()) / "train_report.json");
  EXPECT_EQ(eval.at("metrics").at("validation_r2"), tr.at("report").at("final").at("validation_r2"));
  // Parameters trained under another seed are refused.
  EXPECT_EQ(run({"evaluate", "--config", config_, "--seed", "2", "--out", out()}), 2);
}

TEST_F(Cli, RelevanceRanksLiveFeatureFirst) {
  ASSERT_EQ(train(out()), 0);
  for (const char* method : {"lpn", "gs", "std"}) {
    ASSERT_EQ(run({"relevance", "--config", config_, "--seed", "1", "--out", out(), "--method", method}), 0);
    const fs::path report = fs::path(out()) / (std::string("relevance_") + method + ".json");
    const Json p = payload(report);
    ASSERT_EQ(p.at("features").size(), 2u);
    EXPECT_EQ(p.at("features")[0].at("name"), "x1") << method;
    // The chart is a pure function of the payload.
    std::ifstream svg(fs::path(out()) / (std::string("relevance_") + method + ".svg"));
    std::stringstream text;
    text << svg.rdbuf();
    EXPECT_EQ(text.str(), render_svg(relevance_chart(p)));
  }
  EXPECT_EQ(run({"relevance", "--config", config_, "--seed", "1", "--out", out(), "--method", "lrp"}), 2);
}

TEST_F(Cli, MaskSweep) {
  ASSERT_EQ(train(out()), 0);
  ASSERT_EQ(run({"relevance", "--config", config_, "--seed", "1", "--out", out()}), 0);
  const std::string ranking = (fs::path(out()) / "relevance_lpn.json").string();
  ASSERT_EQ(run({"mask-sweep", "--config", config_, "--seed", "1", "--out", out(), "--ranking", ranking}), 0);
  const Json p = payload(fs::path(out()) / "mask_sweep_lpn.json");
  const Json& asc = p.at("curves")[0];
  const Json& desc = p.at("curves")[1];
  EXPECT_EQ(asc.at("order"), "ascending");
  ASSERT_EQ(asc.at("r2").size(), 3u);
  const Json tr = payload(fs::path(out()) / "train_report.json");
  EXPECT_EQ(asc.at("r2")[0], tr.at("report").at("final").at("validation_r2"));
  EXPECT_EQ(p.at("unmasked_r2"), asc.at("r2")[0]);
  // x2 carries no signal, masking it first barely moves R2.
  EXPECT_EQ(asc.at("features")[0], "x2");
  EXPECT_LT(asc.at("r2")[0].get<double>() - asc.at("r2")[1].get<double>(), 0.01);
  // Everything masked leaves a constant prediction.
  EXPECT_LT(asc.at("r2")[2].get<double>(), 0.01);
  EXPECT_GT(asc.at("auc").get<double>(), desc.at("auc").get<double>());

  // A ranking from a different configuration is refused.
  ASSERT_EQ(train(out("other"), "2"), 0);
  ASSERT_EQ(run({"relevance", "--config", config_, "--seed", "2", "--out", out("other")}), 0);
  const std::string foreign = (fs::path(out("other")) / "relevance_lpn.json").string();
  EXPECT_EQ(run({"mask-sweep", "--config", config_, "--seed", "1", "--out", out(), "--ranking", foreign}), 2);
}

TEST_F(Cli, GapReportsEveryFeaturePerSample) {
  ASSERT_EQ(train(out()), 0);
  ASSERT_EQ(run({"gap", "--config", config_, "--seed", "1", "--out", out(), "--samples", "0,3"}), 0);
  const Json p = payload(fs::path(out()) / "gap_report.json");
  EXPECT_EQ(p.at("factors"), Json(std::vector<double>{1.1, 1.25, 1.5, 1.75, 2.0, 2.5}));
  ASSERT_EQ(p.at("samples").size(), 2u);
  for (const auto& s : p.at("samples")) {
    EXPECT_EQ(s.at("profile").at("gap").size(), 2u);
    EXPECT_EQ(s.at("profile").at("converged").size(), 7u);
  }
  EXPECT_TRUE(fs::exists(fs::path(out()) / "gap_sample_3.svg"));
  EXPECT_EQ(run({"gap", "--config", config_, "--seed", "1", "--out", out(), "--samples", "100000"}), 2);
}

TEST_F(Cli, GapIsDeterministic) {
  ASSERT_EQ(train(out()), 0);
  ASSERT_EQ(run({"gap", "--config", config_, "--seed", "1", "--out", out(), "--samples", "1"}), 0);
  const Json first = payload(fs::path(out()) / "gap_report.json");
  ASSERT_EQ(run({"gap", "--config", config_, "--seed", "1", "--out", out(), "--samples", "1"}), 0);
  EXPECT_EQ(first, payload(fs::path(out()) / "gap_report.json"));
}

TEST_F(Cli, PrepReport) {
  ASSERT_EQ(run({"prep", "--config", config_, "--out", out()}), 0);
  const Json p = payload(fs::path(out()) / "prep_report.json");
  EXPECT_EQ(p.at("dataset").at("rows"), 2000);
  EXPECT_EQ(p.at("dataset").at("train_rows"), 1600);
  EXPECT_EQ(p.at("feature_stats").size(), 2u);
}

TEST_F(Cli, SelfcheckReport) {
  ASSERT_EQ(run({"selfcheck", "--report", "--out", out()}), 0);
  const Json p = payload(fs::path(out()) / "selfcheck_report.json");
  ASSERT_FALSE(p.at("checks").empty());
  for (const auto& c : p.at("checks")) {
    EXPECT_TRUE(c.contains("tolerance"));
    EXPECT_TRUE(c.contains("observed"));
  }
  EXPECT_EQ(run({"selfcheck", "--inject-fault", "relu-variance-sign"}), 1);
}
