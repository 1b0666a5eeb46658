#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace lpn {

/// A numeric regression table in raw units.
struct Dataset {
  Eigen::MatrixXd features;  // N x d
  Eigen::VectorXd target;    // N
  std::vector<std::string> feature_names;
  std::string target_name;
  std::string provenance;
  /// Rows dropped during ingestion because a retained cell did not parse.
  std::size_t rejected_rows = 0;
  std::vector<std::string> warnings;

  Eigen::Index size() const { return features.rows(); }
  Eigen::Index dim() const { return features.cols(); }

  /// Rows in the given order.
  Dataset subset(const std::vector<std::size_t>& rows) const;
};

struct CsvSchema {
  std::string target;
  std::vector<std::string> drop;
};

/// Comma-separated, header row, '.' decimals; double-quoted fields allowed.
/// Throws IngestionError on a missing file, empty file, or missing target.
Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema);

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

/// Seeded shuffle, then the first round(fraction * n) rows go to train.
SplitIndices split(std::size_t n, double fraction, std::uint64_t seed);

/// Per-feature statistics fitted on the training rows only.
class Standardizer {
 public:
  static Standardizer fit(const Dataset& train);

  /// Columns of the raw table that survived (non-zero spread).
  const std::vector<Eigen::Index>& retained() const { return retained_; }
  const std::vector<std::string>& feature_names() const { return names_; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::VectorXd& stddev() const { return stddev_; }
  /// Training medians in raw units (retained columns).
  const Eigen::VectorXd& median() const { return median_; }
  double target_mean() const { return target_mean_; }
  double target_stddev() const { return target_stddev_; }

  /// Raw N x d (all columns) -> standardized N x retained.
  Eigen::MatrixXd transform(const Eigen::MatrixXd& raw) const;
  Eigen::MatrixXd inverse_transform(const Eigen::MatrixXd& standardized) const;
  Eigen::VectorXd transform_target(const Eigen::VectorXd& y) const;
  Eigen::VectorXd inverse_transform_target(const Eigen::VectorXd& y) const;
  /// Training medians mapped into standardized space.
  Eigen::VectorXd standardized_median() const;

 private:
  std::vector<Eigen::Index> retained_;
  std::vector<std::string> names_;
  std::vector<std::string> warnings_;
  Eigen::VectorXd mean_;
  Eigen::VectorXd stddev_;
  Eigen::VectorXd median_;
  double target_mean_ = 0.0;
  double target_stddev_ = 1.0;
};

/// Standardized train/validation matrices ready for training.
struct PreparedSplit {
  Eigen::MatrixXd x_train;
  Eigen::VectorXd y_train;
  Eigen::MatrixXd x_validation;
  Eigen::VectorXd y_validation;
  Standardizer stats;
  SplitIndices indices;

  const std::vector<std::string>& feature_names() const { return stats.feature_names(); }
};

PreparedSplit prepare_split(const Dataset& data, const SplitIndices& indices);

/// Synthetic fixtures, N = 2000, features ~ N(0, 1), noise sd 0.1:
///   linear-1d:               y = 3 x1 + e
///   linear-2d-dead-feature:  y = 3 x1 + e, x2 independent of y
///   noisy-feature:           y = 2 x1 - x2 + 0.5 x1 x2 + e, x3 pure noise
/// Throws ConfigError for an unknown kind.
Dataset make_synthetic(const std::string& kind, std::uint64_t seed);

}  // namespace lpn
