#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include <gtest/gtest.h>

#include "lpn/data.hpp"
#include "lpn/errors.hpp"

using namespace lpn;
namespace fs = std::filesystem;

namespace {

fs::path write_csv(const std::string& name, const std::string& text) {
  const fs::path dir = fs::temp_directory_path() / "lpn_data_tests";
  fs::create_directories(dir);
  const fs::path path = dir / name;
  std::ofstream(path) << text;
  return path;
}

double ols_slope(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  const Eigen::ArrayXd dx = x.array() - x.mean();
  return (dx * (y.array() - y.mean())).sum() / dx.square().sum();
}

double correlation(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const Eigen::ArrayXd da = a.array() - a.mean();
  const Eigen::ArrayXd db = b.array() - b.mean();
  return (da * db).sum() / std::sqrt(da.square().sum() * db.square().sum());
}

}  // namespace

TEST(LoadCsv, SmallTable) {
  const fs::path p = write_csv("toy.csv", "a,b,y\n1,2,3\n4,5,6\n7.5,-8e-1,9\n");
  const Dataset d = load_csv(p, {"y", {}});
  EXPECT_EQ(d.size(), 3);
  EXPECT_EQ(d.dim(), 2);
  EXPECT_EQ(d.feature_names, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(d.target_name, "y");
  EXPECT_EQ(d.features(2, 1), -0.8);
  EXPECT_EQ(d.target[1], 6.0);
  EXPECT_EQ(d.rejected_rows, 0u);
}

TEST(LoadCsv, DropColumnsQuotesAndRejectedRows) {
  const fs::path p = write_csv("mixed.csv",
                               "\"date\",\"x\",\"target\",\"rv1\"\n"
                               "\"2016-01-11 17:00:00\",1.5,60,13.27\n"
                               "\"2016-01-11 17:10:00\",oops,60,18.6\n"
                               "\"2016-01-11 17:20:00\",2.5,50,28.6\n");
  const Dataset d = load_csv(p, {"target", {"date"}});
  EXPECT_EQ(d.feature_names, (std::vector<std::string>{"x", "rv1"}));
  EXPECT_EQ(d.size(), 2);
  EXPECT_EQ(d.rejected_rows, 1u);
  EXPECT_FALSE(d.warnings.empty());
}

TEST(LoadCsv, ParkinsonsStyleSchema) {
  const fs::path p = write_csv("parkinsons_like.csv",
                               "subject#,age,sex,test_time,motor_UPDRS,total_UPDRS,Jitter(%)\n"
                               "1,72,0,5.64,28.2,34.4,0.0066\n"
                               "1,72,0,12.6,28.4,34.9,0.003\n");
  const Dataset d = load_csv(p, {"total_UPDRS", {"subject#", "test_time", "motor_UPDRS"}});
  EXPECT_EQ(d.feature_names, (std::vector<std::string>{"age", "sex", "Jitter(%)"}));
  EXPECT_EQ(d.target[0], 34.4);
}

TEST(LoadCsv, Errors) {
  EXPECT_THROW(load_csv("/nonexistent/file.csv", {"y", {}}), IngestionError);
  EXPECT_THROW(load_csv(write_csv("empty.csv", ""), {"y", {}}), IngestionError);
  EXPECT_THROW(load_csv(write_csv("notarget.csv", "a,b\n1,2\n"), {"y", {}}), IngestionError);
  EXPECT_THROW(load_csv(write_csv("dupe.csv", "a,a,y\n1,2,3\n"), {"y", {}}), IngestionError);
}

TEST(Split, SizesDisjointCovering) {
  const SplitIndices s = split(100, 0.8, 4);
  EXPECT_EQ(s.train.size(), 80u);
  EXPECT_EQ(s.validation.size(), 20u);
  std::set<std::size_t> all(s.train.begin(), s.train.end());
  for (std::size_t i : s.validation) EXPECT_TRUE(all.insert(i).second);
  EXPECT_EQ(all.size(), 100u);
  const SplitIndices again = split(100, 0.8, 4);
  EXPECT_EQ(again.train, s.train);
  EXPECT_EQ(again.validation, s.validation);
  EXPECT_NE(split(100, 0.8, 5).train, s.train);
  EXPECT_FALSE(std::is_sorted(s.train.begin(), s.train.end()));
  EXPECT_THROW(split(100, 1.0, 0), ConfigError);
}

TEST(Standardize, RoundTripAndNoLeakage) {
  const Dataset d = make_synthetic("noisy-feature", 1);
  const SplitIndices idx = split(2000, 0.8, 1);
  const PreparedSplit s = prepare_split(d, idx);
  EXPECT_LT(s.x_train.colwise().mean().cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_GT(s.x_validation.colwise().mean().cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LT(std::abs(s.y_train.mean()), 1e-10);

  const Dataset train = d.subset(idx.train);
  const Dataset validation = d.subset(idx.validation);
  EXPECT_LT((s.stats.inverse_transform(s.x_validation) - validation.features).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT((s.stats.inverse_transform_target(s.y_validation) - validation.target).cwiseAbs().maxCoeff(), 1e-10);
  // Statistics recomputed from the training rows alone.
  const Standardizer refit = Standardizer::fit(train);
  EXPECT_EQ(refit.mean(), s.stats.mean());
  EXPECT_EQ(refit.stddev(), s.stats.stddev());
}

TEST(Standardize, MedianFromTrainRows) {
  Dataset d;
  d.features = (Eigen::MatrixXd(5, 1) << 1, 2, 100, 4, 5).finished();
  d.target = Eigen::VectorXd::LinSpaced(5, 0, 4);
  d.feature_names = {"x"};
  SplitIndices idx;
  idx.train = {0, 1, 3, 4};
  idx.validation = {2};
  const PreparedSplit s = prepare_split(d, idx);
  EXPECT_EQ(s.stats.median()[0], 3.0);
  EXPECT_NEAR(s.stats.standardized_median()[0], (3.0 - 3.0) / s.stats.stddev()[0], 1e-15);
}

TEST(Standardize, ConstantFeatureDroppedWithWarning) {
  Dataset d;
  d.features = Eigen::MatrixXd(4, 2);
  d.features << 1, 7, 2, 7, 3, 7, 4, 7;
  d.target = Eigen::Vector4d(1, 2, 3, 5);
  d.feature_names = {"x", "const"};
  const Standardizer s = Standardizer::fit(d);
  EXPECT_EQ(s.feature_names(), (std::vector<std::string>{"x"}));
  EXPECT_EQ(s.warnings().size(), 1u);
  EXPECT_EQ(s.transform(d.features).cols(), 1);
}

TEST(Synthetic, LinearSlope) {
  const Dataset d = make_synthetic("linear-1d", 0);
  EXPECT_EQ(d.size(), 2000);
  EXPECT_NEAR(ols_slope(d.features.col(0), d.target), 3.0, 0.05);
}

TEST(Synthetic, DeadFeatureUncorrelated) {
  const Dataset d = make_synthetic("linear-2d-dead-feature", 0);
  EXPECT_LT(std::abs(correlation(d.features.col(1), d.target)), 0.05);
  EXPECT_GT(correlation(d.features.col(0), d.target), 0.99);
}

TEST(Synthetic, DeterministicAndValidated) {
  EXPECT_EQ(make_synthetic("noisy-feature", 3).features, make_synthetic("noisy-feature", 3).features);
  EXPECT_NE(make_synthetic("noisy-feature", 3).target, make_synthetic("noisy-feature", 4).target);
  EXPECT_THROW(make_synthetic("quadratic", 0), ConfigError);
}
