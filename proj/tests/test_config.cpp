#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "lpn/config.hpp"
#include "lpn/errors.hpp"

using namespace lpn;
namespace fs = std::filesystem;

TEST(ExperimentConfig, DefaultsFollowTheExperimentSetup) {
  const ExperimentConfig c;
  EXPECT_EQ(c.hidden, (std::vector<int>{256, 128, 16}));
  EXPECT_EQ(c.network.dropout, 0.3);
  EXPECT_EQ(c.network.input_variance, 0.01);
  EXPECT_EQ(c.network.loss_exponent, 0.5);
  EXPECT_EQ(c.network.penalty_weight, 1e-3);
  EXPECT_EQ(c.network.leaky_slope, 0.01);
  EXPECT_EQ(c.train.adam.learning_rate, 5e-4);
  EXPECT_EQ(c.train.epochs_phase1, 300);
  EXPECT_EQ(c.train.epochs_phase2, 100);
  EXPECT_EQ(c.train.batch_size, 64);
  EXPECT_EQ(c.train.folds, 5);
  EXPECT_TRUE(c.train.phase2);
  EXPECT_EQ(c.data.split_fraction, 0.8);
  EXPECT_EQ(c.gap_factors, kDefaultGapFactors);
  EXPECT_TRUE(c.gap.warm_start);
  EXPECT_EQ(c.network_for(18).widths, (std::vector<int>{18, 256, 128, 16, 1}));
}

TEST(ExperimentConfig, ParsesEverySection) {
  const ExperimentConfig c = parse_experiment_config(R"(
[network]
hidden = 32, 8
leaky_slope = 0.05
dropout = 0.1
delta = 0.02
k = 1
lambda = 0.01
seed = 7

[train]
learning_rate = 0.001
beta1 = 0.8
beta2 = 0.99
epsilon = 1e-7
batch_size = 32
epochs_phase1 = 10
epochs_phase2 = 5
phase2 = false
folds = 3
seed = 9
model = dnn

[data]
dataset = synthetic:noisy-feature
split_fraction = 0.75
seed = 11

[gap]
factors = 1.5, 3
learning_rate = 0.05
max_iterations = 100
tolerance = 0.02
warm_start = no
)");
  EXPECT_EQ(c.hidden, (std::vector<int>{32, 8}));
  EXPECT_EQ(c.network.leaky_slope, 0.05);
  EXPECT_EQ(c.network.dropout, 0.1);
  EXPECT_EQ(c.network.input_variance, 0.02);
  EXPECT_EQ(c.network.loss_exponent, 1.0);
  EXPECT_EQ(c.network.penalty_weight, 0.01);
  EXPECT_EQ(c.network.seed, 7u);
  EXPECT_EQ(c.train.adam.learning_rate, 0.001);
  EXPECT_EQ(c.train.adam.beta1, 0.8);
  EXPECT_EQ(c.train.adam.beta2, 0.99);
  EXPECT_EQ(c.train.adam.epsilon, 1e-7);
  EXPECT_EQ(c.train.batch_size, 32);
  EXPECT_EQ(c.train.epochs_phase1, 10);
  EXPECT_EQ(c.train.epochs_phase2, 5);
  EXPECT_FALSE(c.train.phase2);
  EXPECT_EQ(c.train.folds, 3);
  EXPECT_EQ(c.train.seed, 9u);
  EXPECT_EQ(c.train.model, ModelKind::Deterministic);
  EXPECT_EQ(c.data.dataset, "synthetic:noisy-feature");
  EXPECT_EQ(c.data.split_fraction, 0.75);
  EXPECT_EQ(c.data.seed, 11u);
  EXPECT_EQ(c.gap_factors, (std::vector<double>{1.5, 3.0}));
  EXPECT_EQ(c.gap.learning_rate, 0.05);
  EXPECT_EQ(c.gap.max_iterations, 100);
  EXPECT_EQ(c.gap.tolerance, 0.02);
  EXPECT_FALSE(c.gap.warm_start);
}

TEST(ExperimentConfig, RejectsTyposAndBadValues) {
  EXPECT_THROW(parse_experiment_config("[network]\nhiden = 4\n"), ConfigError);
  EXPECT_THROW(parse_experiment_config("[netwrk]\nhidden = 4\n"), ConfigError);
  EXPECT_THROW(parse_experiment_config("[network]\ndropout = lots\n"), ConfigError);
  EXPECT_THROW(parse_experiment_config("[network]\ndropout = 1.0\n"), ConfigError);
  EXPECT_THROW(parse_experiment_config("[train]\nphase2 = maybe\n"), ConfigError);
  EXPECT_THROW(parse_experiment_config("[train]\nmodel = cnn\n"), ConfigError);
  EXPECT_THROW(parse_experiment_config("[gap]\nfactors = 2, 1.5\n"), ConfigError);
  EXPECT_THROW(parse_experiment_config("[gap]\nfactors = 0.5\n"), ConfigError);
  EXPECT_THROW(parse_experiment_config("[data]\nsplit_fraction = 1\n"), ConfigError);
  EXPECT_THROW(load_experiment_config("/nonexistent/config.ini"), ConfigError);
}

TEST(ExperimentConfig, HashTracksEveryField) {
  ExperimentConfig a;
  ExperimentConfig b;
  EXPECT_EQ(a.hash(), b.hash());
  b.gap.tolerance = 0.02;
  EXPECT_NE(a.hash(), b.hash());
  b = a;
  b.set_seed(4);
  EXPECT_NE(a.hash(), b.hash());
  EXPECT_EQ(b.network.seed, 4u);
  EXPECT_EQ(b.train.seed, 4u);
  EXPECT_EQ(b.data.seed, 4u);
}

TEST(ExperimentConfig, RelativeDataPathResolvedAgainstConfigFile) {
  const fs::path dir = fs::temp_directory_path() / "lpn_config_tests";
  fs::create_directories(dir);
  std::ofstream(dir / "exp.ini") << "[data]\ndataset = parkinsons\npath = files/p.data\n";
  const ExperimentConfig c = load_experiment_config(dir / "exp.ini");
  EXPECT_EQ(c.data.path, dir / "files/p.data");
}

TEST(DatasetSchemas, BuiltIn) {
  const CsvSchema p = builtin_schema("parkinsons");
  EXPECT_EQ(p.target, "total_UPDRS");
  EXPECT_EQ(p.drop, (std::vector<std::string>{"subject#", "test_time", "motor_UPDRS"}));
  const CsvSchema e = builtin_schema("energy");
  EXPECT_EQ(e.target, "Appliances");
  EXPECT_EQ(e.drop, (std::vector<std::string>{"date"}));
  EXPECT_THROW(builtin_schema("iris"), ConfigError);
  EXPECT_EQ(default_data_path("energy").filename(), "energydata_complete.csv");
}

TEST(DatasetSchemas, SyntheticLoadsWithoutFiles) {
  DataConfig d;
  d.dataset = "synthetic:linear-2d-dead-feature";
  d.seed = 3;
  const Dataset data = load_dataset(d);
  EXPECT_EQ(data.dim(), 2);
  EXPECT_EQ(data.provenance, "synthetic:linear-2d-dead-feature");
}
