#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lpn/autodiff.hpp"
#include "lpn/gaussian.hpp"

namespace lpn {

/// Smallest admissible prediction variance, keeps log(beta) finite.
inline constexpr double kPredictiveVarianceFloor = 1e-8;

struct NetworkConfig {
  /// Input width, hidden widths, output width (always 1).
  std::vector<int> widths;
  double leaky_slope = 0.01;
  double dropout = 0.3;
  /// Prior variance assigned to every input feature during training.
  double input_variance = 0.01;
  double loss_exponent = 0.5;
  double penalty_weight = 1e-3;
  std::uint64_t seed = 0;

  /// 256-128-16-1 with the defaults above.
  static NetworkConfig standard(int input_dim);

  int input_dim() const { return widths.empty() ? 0 : widths.front(); }
  std::size_t layer_count() const { return widths.empty() ? 0 : widths.size() - 1; }

  /// Throws ConfigError describing the first violated constraint.
  void validate() const;

  bool operator==(const NetworkConfig&) const = default;
};

/// Stable 64-bit hash of every NetworkConfig field, as 16 hex digits.
std::string config_hash(const NetworkConfig& config);

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out

  bool operator==(const DenseLayer& other) const {
    return weight == other.weight && bias == other.bias;
  }
};

struct Parameters {
  std::vector<DenseLayer> layers;

  Eigen::Index size() const;
  /// Per layer: weight (row-major), then bias.
  Eigen::VectorXd flatten() const;
  void assign(const Eigen::VectorXd& flat);
  bool all_finite() const;

  bool operator==(const Parameters&) const = default;
};

struct PredictiveDistribution {
  double mean = 0.0;
  double variance = kPredictiveVarianceFloor;
};

struct ForwardResult {
  PredictiveDistribution prediction;
  /// Input followed by the activation after every filter, in order.
  std::vector<GaussianTensor> trace;
};

/// Glorot-uniform weights, zero biases; deterministic in config.seed.
Parameters init_params(const NetworkConfig& config);

/// Probabilistic forward pass of one sample. `rng` is only consulted in
/// train mode (dropout).
ForwardResult forward(const Parameters& params, const NetworkConfig& config,
                      const GaussianTensor& input, bool train_mode = false,
                      std::mt19937_64* rng = nullptr);

double forward_deterministic(const Parameters& params, const NetworkConfig& config,
                             const Eigen::VectorXd& x);

struct BatchPrediction {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;
};

/// Evaluation-mode probabilistic forward on rows of `means` / `variances`.
BatchPrediction predict(const Parameters& params, const NetworkConfig& config,
                        const Eigen::MatrixXd& means, const Eigen::MatrixXd& variances);

/// Same with every input variance equal to config.input_variance.
BatchPrediction predict(const Parameters& params, const NetworkConfig& config,
                        const Eigen::MatrixXd& means);

Eigen::VectorXd predict_deterministic(const Parameters& params, const NetworkConfig& config,
                                      const Eigen::MatrixXd& x);

// ---- Differentiable path ----------------------------------------------------

struct ParameterVars {
  std::vector<ad::Var> weights;
  std::vector<ad::Var> biases;  // 1 x out

  /// Interleaved W0, b0, W1, b1, ... matching Parameters::flatten.
  std::vector<ad::Var> all() const;
};

ParameterVars bind_parameters(ad::Tape& tape, const Parameters& params);

/// Flattens gradients returned for ParameterVars::all() into the layout of
/// Parameters::flatten.
Eigen::VectorXd flatten_gradients(const std::vector<ad::Tensor>& grads);

/// Per hidden layer keep masks (batch x width, entries 0/1).
struct DropoutMasks {
  std::vector<Eigen::MatrixXd> keep;
};

DropoutMasks sample_dropout_masks(const NetworkConfig& config, Eigen::Index batch,
                                  std::mt19937_64& rng);

struct GraphPrediction {
  ad::Var mean;      // batch x 1
  ad::Var variance;  // batch x 1, floored
};

/// Probabilistic forward on a batch. Dropout applies iff `masks` is given.
GraphPrediction forward_graph(const ParameterVars& params, const NetworkConfig& config,
                              const ad::Var& means, const ad::Var& variances,
                              const DropoutMasks* masks = nullptr);

ad::Var forward_deterministic_graph(const ParameterVars& params, const NetworkConfig& config,
                                    const ad::Var& x, const DropoutMasks* masks = nullptr);

// ---- Persistence -------------------------------------------------------------

enum class ModelKind { Probabilistic, Deterministic };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

struct ParamsFile {
  NetworkConfig config;
  Parameters params;
  ModelKind kind = ModelKind::Probabilistic;
  /// Hash of the experiment configuration that produced the file (may be empty).
  std::string experiment_hash;
};

/// JSON container: format tag, version, config + hash, seed, row-major arrays.
void save_params(const std::filesystem::path& path, const ParamsFile& file);

/// Throws LoadError on a missing file, bad header, or inconsistent shapes.
ParamsFile read_params_file(const std::filesystem::path& path);

/// As read_params_file, additionally requiring the stored config to equal
/// `expected`.
Parameters load_params(const std::filesystem::path& path, const NetworkConfig& expected);

}  // namespace lpn
