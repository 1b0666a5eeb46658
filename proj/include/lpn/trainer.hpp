#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "lpn/data.hpp"
#include "lpn/model.hpp"

namespace lpn {

struct AdamConfig {
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  bool operator==(const AdamConfig&) const = default;
};

struct AdamState {
  Eigen::VectorXd first_moment;
  Eigen::VectorXd second_moment;
  long step = 0;
};

/// One bias-corrected Adam update, in place. Moments are lazily sized.
void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads, AdamState& state,
               const AdamConfig& config);

struct TrainConfig {
  AdamConfig adam;
  int batch_size = 64;
  int epochs_phase1 = 300;
  int epochs_phase2 = 100;
  /// Refine with the entropy-regularized objective after phase 1.
  bool phase2 = true;
  int folds = 5;
  std::uint64_t seed = 0;
  ModelKind model = ModelKind::Probabilistic;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct EpochRecord {
  int phase = 1;
  int epoch = 0;
  double train_loss = 0.0;
  double validation_loss = 0.0;
  double validation_r2 = 0.0;
  double validation_rmse = 0.0;
};

struct FoldMetrics {
  double validation_loss = 0.0;
  double validation_r2 = 0.0;
  double validation_rmse = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  FoldMetrics final_metrics;
  double wall_clock_seconds = 0.0;
};

struct TrainResult {
  Parameters params;
  TrainReport report;
};

/// Keeps batch-sized temporaries on the heap instead of fresh mmap pages
/// (glibc only; a no-op elsewhere). Call once at program start.
void tune_allocator();

/// Called after every epoch; handy for progress output.
using EpochCallback = std::function<void(const EpochRecord&)>;

/// Phase 1 minimizes the mean nll (or MSE for the deterministic baseline);
/// phase 2 continues the same optimizer on nll + lambda * entropy. Data must
/// already be standardized. Throws TrainingError on a non-finite loss.
TrainResult train(const PreparedSplit& data, const NetworkConfig& network,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

/// Same, starting from given parameters instead of a fresh initialization.
TrainResult train_from(Parameters initial, const PreparedSplit& data, const NetworkConfig& network,
                       const TrainConfig& config, const EpochCallback& on_epoch = {});

/// 1 - SS_res / SS_tot. Throws MetricError for fewer than two points or
/// constant targets.
double r_squared(const Eigen::VectorXd& predictions, const Eigen::VectorXd& targets);
double rmse(const Eigen::VectorXd& predictions, const Eigen::VectorXd& targets);

/// Model predictions (means) for rows of standardized features.
Eigen::VectorXd predict_mean(const Parameters& params, const NetworkConfig& network,
                             ModelKind kind, const Eigen::MatrixXd& x);

/// Validation metrics for either model kind. The loss is the mean nll for
/// probabilistic models and the MSE for deterministic ones.
FoldMetrics evaluate(const Parameters& params, const NetworkConfig& network, ModelKind kind,
                     const Eigen::MatrixXd& x, const Eigen::VectorXd& y);

/// Seeded permutation cut into `folds` contiguous, near-equal blocks.
std::vector<std::vector<std::size_t>> fold_assignment(std::size_t n, int folds, std::uint64_t seed);

struct CrossValidationReport {
  std::vector<TrainReport> folds;
  double mean_r2 = 0.0;
  double stddev_r2 = 0.0;
};

/// Each fold is the validation split once; standardization is refit on the
/// remaining rows.
CrossValidationReport cross_validate(const Dataset& data, const NetworkConfig& network,
                                     const TrainConfig& config, const EpochCallback& on_epoch = {});

}  // namespace lpn
