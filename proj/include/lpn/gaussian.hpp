#pragma once

#include <cstdint>
#include <random>
#include <span>

#include <Eigen/Dense>

#include "lpn/adf_moments.hpp"

namespace lpn {

/// Diagonal Gaussian activation N(means, variances).
class GaussianTensor {
 public:
  GaussianTensor() = default;
  GaussianTensor(Eigen::VectorXd means, Eigen::VectorXd variances);

  /// Mean x with every variance set to `variance`.
  static GaussianTensor uniform(const Eigen::VectorXd& means, double variance);

  const Eigen::VectorXd& means() const { return means_; }
  const Eigen::VectorXd& variances() const { return variances_; }
  Eigen::Index size() const { return means_.size(); }

 private:
  Eigen::VectorXd means_;
  Eigen::VectorXd variances_;
};

double std_normal_pdf(double x);
double std_normal_cdf(double x);

GaussianTensor filter_dense(const GaussianTensor& input, const Eigen::MatrixXd& weights,
                            const Eigen::VectorXd& bias);
GaussianTensor filter_relu(const GaussianTensor& input);

/// Throws ConfigError unless 0 <= slope < 1.
GaussianTensor filter_leaky_relu(const GaussianTensor& input, double slope);

/// Same composition without the slope range check; slope = 1 is used by
/// tests to confirm the mean reduces to the identity.
GaussianTensor filter_leaky_relu_unchecked(const GaussianTensor& input, double slope);

/// Dropout with an explicit keep mask (1 = keep). Kept units are scaled by
/// 1/(1-p) on the mean and 1/(1-p)^2 on the variance; dropped units become
/// N(0, 0). Identity when train_mode is false.
GaussianTensor filter_dropout(const GaussianTensor& input, double rate,
                              std::span<const std::uint8_t> keep_mask, bool train_mode);

/// Dropout drawing a Bernoulli(1-p) keep mask from `rng`.
GaussianTensor filter_dropout(const GaussianTensor& input, double rate, std::mt19937_64& rng,
                              bool train_mode);

}  // namespace lpn
