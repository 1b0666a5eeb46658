#include "lpn/trainer.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "lpn/errors.hpp"
#include "lpn/objectives.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace lpn {

namespace {

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& m, const std::vector<std::size_t>& order,
                            std::size_t begin, std::size_t end) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(end - begin), m.cols());
  for (std::size_t i = begin; i < end; ++i) {
    out.row(static_cast<Eigen::Index>(i - begin)) = m.row(static_cast<Eigen::Index>(order[i]));
  }
  return out;
}

Eigen::VectorXd gather(const Eigen::VectorXd& v, const std::vector<std::size_t>& order,
                       std::size_t begin, std::size_t end) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(end - begin));
  for (std::size_t i = begin; i < end; ++i) {
    out[static_cast<Eigen::Index>(i - begin)] = v[static_cast<Eigen::Index>(order[i])];
  }
  return out;
}

// Builds the batch objective and returns (loss, flat gradient).
std::pair<double, Eigen::VectorXd> batch_step(const Parameters& params, const NetworkConfig& network,
                                              ModelKind kind, bool penalized,
                                              const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                              const DropoutMasks* masks) {
  ad::Tape tape;
  const ParameterVars vars = bind_parameters(tape, params);
  const ad::Var target = tape.constant(y);
  ad::Var objective;
  if (kind == ModelKind::Probabilistic) {
    const ad::Var input = penalized ? tape.variable(x) : tape.constant(x);
    const ad::Var variance =
        tape.constant(Eigen::MatrixXd::Constant(x.rows(), x.cols(), network.input_variance));
    const GraphPrediction pred = forward_graph(vars, network, input, variance, masks);
    objective = objective_graph(pred, input, target, network, penalized);
  } else {
    const ad::Var out = forward_deterministic_graph(vars, network, tape.constant(x), masks);
    objective = (1.0 / static_cast<double>(x.rows())) * ad::sum(ad::square(out - target));
  }
  const double loss = objective.scalar();
  if (!std::isfinite(loss)) return {loss, {}};
  return {loss, flatten_gradients(ad::gradient(objective, vars.all()))};
}

}  // namespace

void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 64 << 20);
  mallopt(M_TRIM_THRESHOLD, 256 << 20);
#endif
}

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads, AdamState& state,
               const AdamConfig& config) {
  if (grads.size() != params.size()) throw ConfigError("adam_step: gradient size mismatch");
  if (state.first_moment.size() != params.size()) {
    state.first_moment = Eigen::VectorXd::Zero(params.size());
    state.second_moment = Eigen::VectorXd::Zero(params.size());
    state.step = 0;
  }
  ++state.step;
  state.first_moment = config.beta1 * state.first_moment + (1.0 - config.beta1) * grads;
  state.second_moment =
      config.beta2 * state.second_moment + (1.0 - config.beta2) * grads.cwiseAbs2();
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  params.array() -= config.learning_rate * (state.first_moment.array() / c1) /
                    ((state.second_moment.array() / c2).sqrt() + config.epsilon);
}

void TrainConfig::validate() const {
  if (!(adam.learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
  if (!(adam.beta1 > 0.0 && adam.beta1 < 1.0)) throw ConfigError("beta1 must lie in (0, 1)");
  if (!(adam.beta2 > 0.0 && adam.beta2 < 1.0)) throw ConfigError("beta2 must lie in (0, 1)");
  if (!(adam.epsilon > 0.0)) throw ConfigError("adam epsilon must be > 0");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (epochs_phase1 < 1) throw ConfigError("phase 1 needs at least one epoch");
  if (phase2 && epochs_phase2 < 1) throw ConfigError("phase 2 needs at least one epoch when enabled");
  if (folds < 2) throw ConfigError("cross validation needs at least two folds");
}

double r_squared(const Eigen::VectorXd& predictions, const Eigen::VectorXd& targets) {
  if (predictions.size() != targets.size()) throw MetricError("r_squared: length mismatch");
  if (targets.size() < 2) throw MetricError("r_squared: needs at least two points");
  const double mean = targets.mean();
  const double ss_tot = (targets.array() - mean).square().sum();
  if (!(ss_tot > 0.0)) throw MetricError("r_squared: targets are all identical");
  const double ss_res = (targets - predictions).squaredNorm();
  return 1.0 - ss_res / ss_tot;
}

double rmse(const Eigen::VectorXd& predictions, const Eigen::VectorXd& targets) {
  if (predictions.size() != targets.size() || targets.size() == 0) {
    throw MetricError("rmse: length mismatch or empty input");
  }
  return std::sqrt((targets - predictions).squaredNorm() / static_cast<double>(targets.size()));
}

Eigen::VectorXd predict_mean(const Parameters& params, const NetworkConfig& network,
                             ModelKind kind, const Eigen::MatrixXd& x) {
  if (kind == ModelKind::Probabilistic) return predict(params, network, x).mean;
  return predict_deterministic(params, network, x);
}

FoldMetrics evaluate(const Parameters& params, const NetworkConfig& network, ModelKind kind,
                     const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  FoldMetrics m;
  Eigen::VectorXd mean;
  if (kind == ModelKind::Probabilistic) {
    const BatchPrediction pred = predict(params, network, x);
    m.validation_loss = mean_nll_loss(y, pred, network.loss_exponent);
    mean = pred.mean;
  } else {
    mean = predict_deterministic(params, network, x);
    m.validation_loss = (y - mean).squaredNorm() / static_cast<double>(y.size());
  }
  m.validation_r2 = r_squared(mean, y);
  m.validation_rmse = rmse(mean, y);
  return m;
}

TrainResult train(const PreparedSplit& data, const NetworkConfig& network,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
  network.validate();
  return train_from(init_params(network), data, network, config, on_epoch);
}

TrainResult train_from(Parameters initial, const PreparedSplit& data, const NetworkConfig& network,
                       const TrainConfig& config, const EpochCallback& on_epoch) {
  network.validate();
  config.validate();
  if (data.x_train.cols() != network.input_dim()) {
    throw ConfigError("training data has " + std::to_string(data.x_train.cols()) +
                      " features, network expects " + std::to_string(network.input_dim()));
  }
  const auto started = std::chrono::steady_clock::now();

  TrainResult result{std::move(initial), {}};
  Parameters& params = result.params;
  Eigen::VectorXd flat = params.flatten();
  AdamState state;
  std::mt19937_64 rng(config.seed);

  const auto n = static_cast<std::size_t>(data.x_train.rows());
  const auto batch = static_cast<std::size_t>(config.batch_size);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  const bool probabilistic = config.model == ModelKind::Probabilistic;
  const int phase2_epochs = config.phase2 ? config.epochs_phase2 : 0;
  const int total_epochs = config.epochs_phase1 + phase2_epochs;
  for (int epoch = 0; epoch < total_epochs; ++epoch) {
    const int phase = epoch < config.epochs_phase1 ? 1 : 2;
    // The deterministic baseline has no relevance penalty; phase 2 simply
    // continues plain training for the same budget.
    const bool penalized = probabilistic && phase == 2;
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t begin = 0; begin < n; begin += batch, ++batch_index) {
      const std::size_t end = std::min(n, begin + batch);
      const Eigen::MatrixXd x = gather_rows(data.x_train, order, begin, end);
      const Eigen::VectorXd y = gather(data.y_train, order, begin, end);
      DropoutMasks masks;
      const bool dropout = network.dropout > 0.0;
      if (dropout) masks = sample_dropout_masks(network, x.rows(), rng);
      auto [loss, grads] =
          batch_step(params, network, config.model, penalized, x, y, dropout ? &masks : nullptr);
      if (!std::isfinite(loss) || !grads.allFinite()) {
        throw TrainingError("non-finite loss in phase " + std::to_string(phase) + ", epoch " +
                            std::to_string(epoch + 1) + ", batch " + std::to_string(batch_index) +
                            " (shuffled rows " + std::to_string(begin) + ".." +
                            std::to_string(end - 1) + ")");
      }
      adam_step(flat, grads, state, config.adam);
      params.assign(flat);
      loss_sum += loss * static_cast<double>(end - begin);
    }
    if (!params.all_finite()) {
      throw TrainingError("parameters became non-finite in phase " + std::to_string(phase) +
                          ", epoch " + std::to_string(epoch + 1));
    }
    EpochRecord record;
    record.phase = phase;
    record.epoch = epoch + 1;
    record.train_loss = loss_sum / static_cast<double>(n);
    const FoldMetrics m = evaluate(params, network, config.model, data.x_validation, data.y_validation);
    record.validation_loss = m.validation_loss;
    record.validation_r2 = m.validation_r2;
    record.validation_rmse = m.validation_rmse;
    result.report.epochs.push_back(record);
    if (on_epoch) on_epoch(record);
  }
  result.report.final_metrics =
      evaluate(params, network, config.model, data.x_validation, data.y_validation);
  result.report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

std::vector<std::vector<std::size_t>> fold_assignment(std::size_t n, int folds, std::uint64_t seed) {
  if (folds < 2) throw ConfigError("cross validation needs at least two folds");
  if (static_cast<std::size_t>(folds) > n) {
    throw ConfigError("cannot cut " + std::to_string(n) + " samples into " + std::to_string(folds) +
                      " folds");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out(static_cast<std::size_t>(folds));
  const auto k = static_cast<std::size_t>(folds);
  for (std::size_t f = 0; f < k; ++f) {
    out[f].assign(order.begin() + static_cast<std::ptrdiff_t>(f * n / k),
                  order.begin() + static_cast<std::ptrdiff_t>((f + 1) * n / k));
  }
  return out;
}

CrossValidationReport cross_validate(const Dataset& data, const NetworkConfig& network,
                                     const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  const auto folds = fold_assignment(static_cast<std::size_t>(data.size()), config.folds, config.seed);
  CrossValidationReport report;
  std::vector<double> r2;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    SplitIndices indices;
    indices.validation = folds[f];
    for (std::size_t g = 0; g < folds.size(); ++g) {
      if (g != f) indices.train.insert(indices.train.end(), folds[g].begin(), folds[g].end());
    }
    const PreparedSplit prepared = prepare_split(data, indices);
    NetworkConfig fold_network = network;
    fold_network.widths.front() = static_cast<int>(prepared.x_train.cols());
    fold_network.seed = network.seed + f;
    TrainConfig fold_config = config;
    fold_config.seed = config.seed + f;
    TrainResult result = train(prepared, fold_network, fold_config, on_epoch);
    r2.push_back(result.report.final_metrics.validation_r2);
    report.folds.push_back(std::move(result.report));
  }
  const double mean = std::accumulate(r2.begin(), r2.end(), 0.0) / static_cast<double>(r2.size());
  double ss = 0.0;
  for (double v : r2) ss += (v - mean) * (v - mean);
  report.mean_r2 = mean;
  report.stddev_r2 = std::sqrt(ss / static_cast<double>(r2.size() - 1));
  return report;
}

}  // namespace lpn
