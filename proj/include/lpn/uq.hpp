#pragma once

// Explaining a prediction's variance through its inputs: with the network
// frozen, per-feature input variances are re-fitted so the predictive variance
// grows by a factor t while the mean stays put, and the curve of fitted input
// variance against achieved predictive variance is summarized by its area.

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "lpn/model.hpp"

namespace lpn {

inline const std::vector<double> kDefaultGapFactors = {1.1, 1.25, 1.5, 1.75, 2.0, 2.5};

struct CalibrationConfig {
  double learning_rate = 0.01;
  int max_iterations = 500;
  /// Stop once |beta / (t beta*) - 1| falls below this.
  double tolerance = 0.01;
  /// Start each factor from the previous factor's solution.
  bool warm_start = true;

  bool operator==(const CalibrationConfig&) const = default;
};

struct CalibrationResult {
  /// Fitted input variances, delta * exp(log_scale).
  Eigen::VectorXd sigma;
  Eigen::VectorXd log_scale;
  double mean = 0.0;
  double variance = 0.0;
  double kl = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// KL(N(mean, var) || N(target_mean, target_var)).
double gaussian_kl(double mean, double var, double target_mean, double target_var);

/// Fits input variances so the prediction at x approaches N(mean*, t beta*),
/// where (mean*, beta*) is the prediction with every input variance = delta.
/// Adam on the log-scales; returns the best iterate (by KL) and a convergence
/// flag instead of failing when the tolerance is not reached.
CalibrationResult calibrate_sigma(const Parameters& params, const NetworkConfig& config,
                                  const Eigen::VectorXd& x, double delta, double factor,
                                  const CalibrationConfig& options = {},
                                  const Eigen::VectorXd* initial_log_scale = nullptr);

/// Trapezoidal area under (xs, ys); xs must be sorted ascending.
double trapezoid_auc(std::span<const double> xs, std::span<const double> ys);

struct GapProfile {
  /// Calibration factors, starting with the t = 1 anchor.
  std::vector<double> factors;
  std::vector<double> achieved_variance;
  /// factors.size() x d fitted input variances.
  Eigen::MatrixXd sigma;
  Eigen::VectorXd gap;
  std::vector<int> iterations;
  std::vector<bool> converged;
  double baseline_mean = 0.0;
  double baseline_variance = 0.0;

  bool all_converged() const;
};

/// Runs calibrate_sigma for every factor (ascending, t = 1 anchor prepended)
/// and scores each feature by the area under sigma_j against achieved beta.
GapProfile gap_scores(const Parameters& params, const NetworkConfig& config,
                      const Eigen::VectorXd& x, double delta,
                      const std::vector<double>& factors = kDefaultGapFactors,
                      const CalibrationConfig& options = {});

}  // namespace lpn
