#include "lpn/objectives.hpp"

#include <cmath>

#include "lpn/errors.hpp"

namespace lpn {

namespace {

Eigen::MatrixXd lpn_relevance_rows(const Parameters& params, const NetworkConfig& config,
                                   const Eigen::MatrixXd& x) {
  ad::Tape tape;
  const ParameterVars vars = bind_parameters(tape, params);
  const ad::Var input = tape.variable(x);
  const ad::Var variance =
      tape.constant(Eigen::MatrixXd::Constant(x.rows(), x.cols(), config.input_variance));
  const GraphPrediction pred = forward_graph(vars, config, input, variance);
  return relevance_graph(pred, input).value();
}

Eigen::MatrixXd deterministic_gradient_rows(const Parameters& params, const NetworkConfig& config,
                                            const Eigen::MatrixXd& x) {
  ad::Tape tape;
  const ParameterVars vars = bind_parameters(tape, params);
  const ad::Var input = tape.variable(x);
  const ad::Var out = forward_deterministic_graph(vars, config, input);
  const ad::Var inputs[] = {input};
  return ad::gradient(ad::sum(out), inputs)[0];
}

}  // namespace

std::string to_string(RelevanceMethod method) {
  switch (method) {
    case RelevanceMethod::Lpn:
      return "lpn";
    case RelevanceMethod::Gradient:
      return "gs";
    case RelevanceMethod::Taylor:
      return "std";
  }
  return "?";
}

RelevanceMethod relevance_method_from_string(const std::string& name) {
  if (name == "lpn") return RelevanceMethod::Lpn;
  if (name == "gs") return RelevanceMethod::Gradient;
  if (name == "std") return RelevanceMethod::Taylor;
  throw ConfigError("unknown relevance method '" + name + "' (expected lpn, gs or std)");
}

double nll_loss(double y, const PredictiveDistribution& pred, double k) {
  const double r = y - pred.mean;
  return std::log(pred.variance) + std::pow(r * r / pred.variance, k);
}

double mean_nll_loss(const Eigen::VectorXd& y, const BatchPrediction& pred, double k) {
  if (y.size() != pred.mean.size()) throw ConfigError("mean_nll_loss: size mismatch");
  double total = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    total += nll_loss(y[i], {pred.mean[i], pred.variance[i]}, k);
  }
  return total / static_cast<double>(y.size());
}

Eigen::MatrixXd relevance_rows(RelevanceMethod method, const Parameters& params,
                               const NetworkConfig& config, const Eigen::MatrixXd& x) {
  switch (method) {
    case RelevanceMethod::Lpn:
      return lpn_relevance_rows(params, config, x);
    case RelevanceMethod::Gradient:
      return deterministic_gradient_rows(params, config, x).array().square().matrix();
    case RelevanceMethod::Taylor:
      return (x.array() * deterministic_gradient_rows(params, config, x).array()).square().matrix();
  }
  throw UsageError("relevance_rows: unknown method");
}

RelevanceVector relevance_lpn(const Parameters& params, const NetworkConfig& config,
                              const Eigen::VectorXd& x) {
  return {relevance_rows(RelevanceMethod::Lpn, params, config, x.transpose()).row(0).transpose(),
          RelevanceMethod::Lpn};
}

RelevanceVector relevance_gs(const Parameters& params, const NetworkConfig& config,
                             const Eigen::VectorXd& x) {
  return {relevance_rows(RelevanceMethod::Gradient, params, config, x.transpose()).row(0).transpose(),
          RelevanceMethod::Gradient};
}

RelevanceVector relevance_std(const Parameters& params, const NetworkConfig& config,
                              const Eigen::VectorXd& x) {
  return {relevance_rows(RelevanceMethod::Taylor, params, config, x.transpose()).row(0).transpose(),
          RelevanceMethod::Taylor};
}

RelevanceVector mean_relevance(RelevanceMethod method, const Parameters& params,
                               const NetworkConfig& config, const Eigen::MatrixXd& x) {
  if (x.rows() == 0) throw UsageError("mean_relevance: no samples");
  // Chunked so the tape stays small on large validation sets.
  constexpr Eigen::Index kChunk = 256;
  Eigen::VectorXd total = Eigen::VectorXd::Zero(x.cols());
  for (Eigen::Index start = 0; start < x.rows(); start += kChunk) {
    const Eigen::Index n = std::min(kChunk, x.rows() - start);
    total += relevance_rows(method, params, config, x.middleRows(start, n)).colwise().sum().transpose();
  }
  return {total / static_cast<double>(x.rows()), method};
}

double entropy_penalty(const Eigen::VectorXd& scores) {
  const Eigen::ArrayXd shifted = scores.array() + kEntropyEpsilon;
  const Eigen::ArrayXd h = shifted / shifted.sum();
  return -(h * h.log()).sum();
}

double entropy_penalty(const RelevanceVector& relevance) { return entropy_penalty(relevance.scores); }

double mean_relevance_entropy(const Parameters& params, const NetworkConfig& config,
                              const Eigen::MatrixXd& x) {
  const Eigen::MatrixXd rel = relevance_rows(RelevanceMethod::Lpn, params, config, x);
  double entropy = 0.0;
  for (Eigen::Index i = 0; i < rel.rows(); ++i) entropy += entropy_penalty(Eigen::VectorXd(rel.row(i).transpose()));
  return entropy / static_cast<double>(x.rows());
}

Eigen::VectorXd mean_relevance_entropy_gradient(const Parameters& params,
                                                const NetworkConfig& config,
                                                const Eigen::MatrixXd& x) {
  ad::Tape tape;
  const ParameterVars vars = bind_parameters(tape, params);
  const ad::Var input = tape.variable(x);
  const ad::Var variance =
      tape.constant(Eigen::MatrixXd::Constant(x.rows(), x.cols(), config.input_variance));
  const GraphPrediction pred = forward_graph(vars, config, input, variance);
  const ad::Var entropy = ad::sum(entropy_graph(relevance_graph(pred, input))) /
                          static_cast<double>(x.rows());
  return flatten_gradients(ad::gradient(entropy, vars.all()));
}

double regularized_loss(const Parameters& params, const NetworkConfig& config,
                        const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  const double nll = mean_nll_loss(y, predict(params, config, x), config.loss_exponent);
  if (config.penalty_weight == 0.0) return nll;
  return nll + config.penalty_weight * mean_relevance_entropy(params, config, x);
}

Eigen::VectorXd regularized_loss_gradient(const Parameters& params, const NetworkConfig& config,
                                          const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  ad::Tape tape;
  const ParameterVars vars = bind_parameters(tape, params);
  const ad::Var input = tape.variable(x);
  const ad::Var variance =
      tape.constant(Eigen::MatrixXd::Constant(x.rows(), x.cols(), config.input_variance));
  const ad::Var target = tape.constant(y);
  const GraphPrediction pred = forward_graph(vars, config, input, variance);
  const ad::Var objective = objective_graph(pred, input, target, config, config.penalty_weight > 0.0);
  return flatten_gradients(ad::gradient(objective, vars.all()));
}

ad::Var nll_graph(const GraphPrediction& pred, const ad::Var& y, double k) {
  const ad::Var residual = y - pred.mean;
  ad::Var fit;
  if (k == 0.5) {
    fit = ad::abs_smooth(residual, kResidualSmoothing) / ad::sqrt(pred.variance);
  } else {
    fit = ad::pow(ad::square(residual) + kResidualSmoothing * kResidualSmoothing, k) /
          ad::pow(pred.variance, k);
  }
  return ad::log(pred.variance) + fit;
}

ad::Var relevance_graph(const GraphPrediction& pred, const ad::Var& x) {
  const ad::Var inputs[] = {x};
  // Rows are independent samples, so d(sum)/dx row i = d(output_i)/dx_i.
  const ad::Var dmean = x.tape()->grad(ad::sum(pred.mean), inputs)[0];
  const ad::Var dvar = x.tape()->grad(ad::sum(pred.variance), inputs)[0];
  return ad::square(x * dmean) + ad::square(x * dvar);
}

ad::Var entropy_graph(const ad::Var& scores) {
  const ad::Var shifted = scores + kEntropyEpsilon;
  const ad::Var h = shifted / ad::broadcast_cols(ad::sum_cols(shifted), scores.cols());
  return -ad::sum_cols(h * ad::log(h));
}

ad::Var objective_graph(const GraphPrediction& pred, const ad::Var& x, const ad::Var& y,
                        const NetworkConfig& config, bool with_penalty) {
  const double inv_batch = 1.0 / static_cast<double>(x.rows());
  ad::Var objective = inv_batch * ad::sum(nll_graph(pred, y, config.loss_exponent));
  if (with_penalty) {
    const ad::Var entropy = entropy_graph(relevance_graph(pred, x));
    objective = objective + (config.penalty_weight * inv_batch) * ad::sum(entropy);
  }
  return objective;
}

}  // namespace lpn
