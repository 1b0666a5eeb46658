#pragma once

#include <string>

#include <Eigen/Dense>

#include "lpn/autodiff.hpp"
#include "lpn/model.hpp"

namespace lpn {

/// Added to every relevance score before normalizing to a distribution.
inline constexpr double kEntropyEpsilon = 1e-12;
/// |r| is differentiated as sqrt(r^2 + eps^2).
inline constexpr double kResidualSmoothing = 1e-8;

enum class RelevanceMethod {
  Lpn,       // (x dy/dx)^2 + (x dbeta/dx)^2 on the probabilistic model
  Gradient,  // (df/dx)^2 on the deterministic forward
  Taylor,    // (x df/dx)^2 on the deterministic forward, root point 0
};

std::string to_string(RelevanceMethod method);
RelevanceMethod relevance_method_from_string(const std::string& name);

struct RelevanceVector {
  Eigen::VectorXd scores;
  RelevanceMethod method = RelevanceMethod::Lpn;
};

/// log(beta) + ((y - mean)^2 / beta)^k.
double nll_loss(double y, const PredictiveDistribution& pred, double k);

double mean_nll_loss(const Eigen::VectorXd& y, const BatchPrediction& pred, double k);

RelevanceVector relevance_lpn(const Parameters& params, const NetworkConfig& config,
                              const Eigen::VectorXd& x);
RelevanceVector relevance_gs(const Parameters& params, const NetworkConfig& config,
                             const Eigen::VectorXd& x);
RelevanceVector relevance_std(const Parameters& params, const NetworkConfig& config,
                              const Eigen::VectorXd& x);

/// One row of scores per row of `x`.
Eigen::MatrixXd relevance_rows(RelevanceMethod method, const Parameters& params,
                               const NetworkConfig& config, const Eigen::MatrixXd& x);

/// Scores averaged over the rows of `x`.
RelevanceVector mean_relevance(RelevanceMethod method, const Parameters& params,
                               const NetworkConfig& config, const Eigen::MatrixXd& x);

/// Shannon entropy of the scores normalized to a probability vector; ln(d)
/// for an all-zero vector. Not multiplied by lambda.
double entropy_penalty(const Eigen::VectorXd& scores);
double entropy_penalty(const RelevanceVector& relevance);

/// Mean over rows of x of the entropy of the probabilistic relevance.
double mean_relevance_entropy(const Parameters& params, const NetworkConfig& config,
                              const Eigen::MatrixXd& x);

/// Its gradient with respect to the flattened parameters (a second-order
/// quantity: the relevance itself is a gradient).
Eigen::VectorXd mean_relevance_entropy_gradient(const Parameters& params,
                                                const NetworkConfig& config,
                                                const Eigen::MatrixXd& x);

/// Evaluation-mode objective: mean over rows of nll + lambda * entropy.
double regularized_loss(const Parameters& params, const NetworkConfig& config,
                        const Eigen::MatrixXd& x, const Eigen::VectorXd& y);

/// Gradient of regularized_loss with respect to the flattened parameters.
Eigen::VectorXd regularized_loss_gradient(const Parameters& params, const NetworkConfig& config,
                                          const Eigen::MatrixXd& x, const Eigen::VectorXd& y);

// ---- Graph builders (batch rows are samples) ---------------------------------

/// Per-sample smoothed nll, batch x 1.
ad::Var nll_graph(const GraphPrediction& pred, const ad::Var& y, double k);

/// Per-sample probabilistic relevance, batch x d. `x` must be a tape variable
/// the prediction was computed from; the result carries first-order nodes.
ad::Var relevance_graph(const GraphPrediction& pred, const ad::Var& x);

/// Per-row entropy of normalized scores, batch x 1.
ad::Var entropy_graph(const ad::Var& scores);

/// Mean nll over the batch plus, when `with_penalty`, lambda times the mean
/// entropy of the probabilistic relevance. 1x1.
ad::Var objective_graph(const GraphPrediction& pred, const ad::Var& x, const ad::Var& y,
                        const NetworkConfig& config, bool with_penalty);

}  // namespace lpn
