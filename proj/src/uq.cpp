#include "lpn/uq.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "lpn/errors.hpp"
#include "lpn/trainer.hpp"

namespace lpn {

double gaussian_kl(double mean, double var, double target_mean, double target_var) {
  const double d = mean - target_mean;
  return 0.5 * (std::log(target_var / var) + (var + d * d) / target_var - 1.0);
}

CalibrationResult calibrate_sigma(const Parameters& params, const NetworkConfig& config,
                                  const Eigen::VectorXd& x, double delta, double factor,
                                  const CalibrationConfig& options,
                                  const Eigen::VectorXd* initial_log_scale) {
  if (!(factor >= 1.0)) throw ConfigError("calibration factor must be >= 1");
  if (!(delta > 0.0)) throw ConfigError("calibration needs a positive input variance prior");
  if (x.size() != config.input_dim()) throw ConfigError("calibrate_sigma: input width mismatch");
  const Eigen::Index d = x.size();

  const Eigen::MatrixXd means = x.transpose();
  const BatchPrediction base = predict(params, config, means, Eigen::MatrixXd::Constant(1, d, delta));
  const double target_mean = base.mean[0];
  const double target_var = factor * base.variance[0];

  Eigen::VectorXd rho = initial_log_scale != nullptr ? *initial_log_scale : Eigen::VectorXd::Zero(d);
  if (rho.size() != d) throw ConfigError("calibrate_sigma: initial log-scale has the wrong size");

  AdamConfig adam;
  adam.learning_rate = options.learning_rate;
  AdamState state;

  CalibrationResult best;
  best.kl = std::numeric_limits<double>::infinity();
  for (int iteration = 0;; ++iteration) {
    ad::Tape tape;
    const ParameterVars vars = bind_parameters(tape, params);
    const ad::Var log_scale = tape.variable(rho.transpose());
    const ad::Var sigma = delta * ad::exp(log_scale);
    const GraphPrediction pred = forward_graph(vars, config, tape.constant(means), sigma);
    const double mean = pred.mean.scalar();
    const double var = pred.variance.scalar();
    // KL(current || target), closed form for univariate Gaussians.
    const ad::Var diff = pred.mean - target_mean;
    const ad::Var kl = 0.5 * ((std::log(target_var) - ad::log(pred.variance)) +
                              (pred.variance + ad::square(diff)) / target_var - 1.0);
    const double kl_value = kl.scalar();
    const bool converged = std::abs(var / target_var - 1.0) < options.tolerance;
    if (converged || kl_value < best.kl) {
      best.sigma = sigma.value().row(0).transpose();
      best.log_scale = rho;
      best.mean = mean;
      best.variance = var;
      best.kl = kl_value;
      best.iterations = iteration;
      best.converged = converged;
    }
    if (converged || iteration >= options.max_iterations) break;
    const ad::Var inputs[] = {log_scale};
    const Eigen::VectorXd grad = ad::gradient(kl, inputs)[0].row(0).transpose();
    adam_step(rho, grad, state, adam);
  }
  return best;
}

double trapezoid_auc(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw ConfigError("trapezoid_auc: length mismatch");
  double area = 0.0;
  for (std::size_t i = 1; i < xs.size(); ++i) {
    area += 0.5 * (ys[i] + ys[i - 1]) * (xs[i] - xs[i - 1]);
  }
  return area;
}

bool GapProfile::all_converged() const {
  return std::all_of(converged.begin(), converged.end(), [](bool c) { return c; });
}

GapProfile gap_scores(const Parameters& params, const NetworkConfig& config,
                      const Eigen::VectorXd& x, double delta, const std::vector<double>& factors,
                      const CalibrationConfig& options) {
  if (!std::is_sorted(factors.begin(), factors.end())) {
    throw ConfigError("gap factors must be sorted ascending");
  }
  std::vector<double> ts = {1.0};
  for (double t : factors) {
    if (!(t >= 1.0)) throw ConfigError("gap factors must be >= 1");
    if (t > 1.0) ts.push_back(t);
  }

  const Eigen::Index d = x.size();
  GapProfile profile;
  profile.factors = ts;
  profile.sigma.resize(static_cast<Eigen::Index>(ts.size()), d);

  const BatchPrediction base =
      predict(params, config, x.transpose(), Eigen::MatrixXd::Constant(1, d, delta));
  profile.baseline_mean = base.mean[0];
  profile.baseline_variance = base.variance[0];

  Eigen::VectorXd warm = Eigen::VectorXd::Zero(d);
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const Eigen::VectorXd* start = options.warm_start ? &warm : nullptr;
    const CalibrationResult r = calibrate_sigma(params, config, x, delta, ts[i], options, start);
    profile.achieved_variance.push_back(r.variance);
    profile.sigma.row(static_cast<Eigen::Index>(i)) = r.sigma.transpose();
    profile.iterations.push_back(r.iterations);
    profile.converged.push_back(r.converged);
    warm = r.log_scale;
  }

  // Integrate over the points ordered by achieved variance.
  std::vector<std::size_t> order(ts.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return profile.achieved_variance[a] < profile.achieved_variance[b];
  });
  std::vector<double> xs;
  for (std::size_t i : order) xs.push_back(profile.achieved_variance[i]);
  profile.gap.resize(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    std::vector<double> ys;
    for (std::size_t i : order) ys.push_back(profile.sigma(static_cast<Eigen::Index>(i), j));
    profile.gap[j] = trapezoid_auc(xs, ys);
  }
  return profile;
}

}  // namespace lpn
