#include "lpn/gaussian.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "lpn/errors.hpp"

namespace lpn {

namespace {

void check_invariants(const Eigen::VectorXd& means, const Eigen::VectorXd& variances) {
  if (means.size() != variances.size()) {
    throw ConfigError("GaussianTensor: means has " + std::to_string(means.size()) +
                      " entries but variances has " + std::to_string(variances.size()));
  }
  if (!means.allFinite() || !variances.allFinite()) {
    throw ConfigError("GaussianTensor: non-finite entry");
  }
  if ((variances.array() < 0.0).any()) {
    throw ConfigError("GaussianTensor: negative variance");
  }
}

GaussianTensor from_moments(const adf::Moments& m) {
  return GaussianTensor(m.mean.matrix().col(0), m.var.matrix().col(0));
}

}  // namespace

GaussianTensor::GaussianTensor(Eigen::VectorXd means, Eigen::VectorXd variances)
    : means_(std::move(means)), variances_(std::move(variances)) {
  check_invariants(means_, variances_);
}

GaussianTensor GaussianTensor::uniform(const Eigen::VectorXd& means, double variance) {
  return GaussianTensor(means, Eigen::VectorXd::Constant(means.size(), variance));
}

double std_normal_pdf(double x) {
  return std::exp(-0.5 * x * x) * (std::numbers::inv_sqrtpi / std::numbers::sqrt2);
}

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

namespace adf {

Eigen::ArrayXXd std_normal_pdf(const Eigen::ArrayXXd& x) {
  return (-0.5 * x.square()).exp() * (std::numbers::inv_sqrtpi / std::numbers::sqrt2);
}
Eigen::ArrayXXd std_normal_cdf(const Eigen::ArrayXXd& x) {
  return x.unaryExpr([](double v) { return lpn::std_normal_cdf(v); });
}

GaussTerms gauss_terms(const Eigen::ArrayXXd& mean, const Eigen::ArrayXXd& var) {
  GaussTerms t;
  t.sd = var.max(kVarianceFloor).sqrt();
  const Eigen::ArrayXXd alpha = mean / t.sd;
  t.cdf = std_normal_cdf(alpha);
  t.pdf = std_normal_pdf(alpha);
  return t;
}

Eigen::ArrayXXd leaky_first_moment(const Eigen::ArrayXXd& mean, const GaussTerms& t, double slope) {
  return mean * t.cdf + t.sd * t.pdf - slope * (t.sd * t.pdf - mean * (1.0 - t.cdf));
}

Eigen::ArrayXXd leaky_second_moment(const Eigen::ArrayXXd& mean, const GaussTerms& t,
                                    double slope) {
  const double c2 = slope * slope;
  return (mean.square() + t.sd.square()) * (t.cdf + c2 * (1.0 - t.cdf)) +
         (1.0 - c2) * mean * t.sd * t.pdf;
}

Eigen::ArrayXXd gauss_cdf_mix(const GaussTerms& t, double p) { return (1.0 - p) * t.cdf + p; }

Eigen::ArrayXXd gauss_pdf_ratio(const GaussTerms& t) { return t.pdf / t.sd; }

Moments leaky_relu_moments(const Eigen::ArrayXXd& mean, const Eigen::ArrayXXd& var,
                           double slope) {
  const GaussTerms t = gauss_terms(mean, var);
  Moments out;
  out.mean = leaky_first_moment(mean, t, slope);
  out.var = (leaky_second_moment(mean, t, slope) - out.mean.square()).max(0.0);
  return out;
}

}  // namespace adf

GaussianTensor filter_dense(const GaussianTensor& input, const Eigen::MatrixXd& weights,
                            const Eigen::VectorXd& bias) {
  if (weights.cols() != input.size() || weights.rows() != bias.size()) {
    throw ConfigError("filter_dense: weights " + std::to_string(weights.rows()) + "x" +
                      std::to_string(weights.cols()) + ", bias " + std::to_string(bias.size()) +
                      ", input " + std::to_string(input.size()));
  }
  Eigen::VectorXd means = weights * input.means() + bias;
  Eigen::VectorXd variances = weights.array().square().matrix() * input.variances();
  return GaussianTensor(std::move(means), std::move(variances));
}

GaussianTensor filter_relu(const GaussianTensor& input) {
  const Eigen::ArrayXXd mean = input.means().array();
  const Eigen::ArrayXXd var = input.variances().array();
  return from_moments(adf::relu_moments(mean, var));
}

GaussianTensor filter_leaky_relu_unchecked(const GaussianTensor& input, double slope) {
  const Eigen::ArrayXXd mean = input.means().array();
  const Eigen::ArrayXXd var = input.variances().array();
  return from_moments(adf::leaky_relu_moments(mean, var, slope));
}

GaussianTensor filter_leaky_relu(const GaussianTensor& input, double slope) {
  if (!(slope >= 0.0 && slope < 1.0)) {
    throw ConfigError("filter_leaky_relu: slope must lie in [0, 1), got " + std::to_string(slope));
  }
  return filter_leaky_relu_unchecked(input, slope);
}

GaussianTensor filter_dropout(const GaussianTensor& input, double rate,
                              std::span<const std::uint8_t> keep_mask, bool train_mode) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError("filter_dropout: rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (!train_mode) return input;
  if (static_cast<Eigen::Index>(keep_mask.size()) != input.size()) {
    throw ConfigError("filter_dropout: mask length does not match input");
  }
  const double scale = 1.0 / (1.0 - rate);
  Eigen::VectorXd means = input.means();
  Eigen::VectorXd variances = input.variances();
  for (Eigen::Index i = 0; i < input.size(); ++i) {
    if (keep_mask[static_cast<std::size_t>(i)] != 0) {
      means[i] *= scale;
      variances[i] *= scale * scale;
    } else {
      means[i] = 0.0;
      variances[i] = 0.0;
    }
  }
  return GaussianTensor(std::move(means), std::move(variances));
}

GaussianTensor filter_dropout(const GaussianTensor& input, double rate, std::mt19937_64& rng,
                              bool train_mode) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError("filter_dropout: rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (!train_mode) return input;
  std::bernoulli_distribution keep(1.0 - rate);
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(input.size()));
  for (auto& m : mask) m = keep(rng) ? 1 : 0;
  return filter_dropout(input, rate, mask, train_mode);
}

}  // namespace lpn
