#include "lpn/model.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "lpn/errors.hpp"
#include "lpn/report.hpp"

namespace lpn {

namespace {

using Json = nlohmann::json;

constexpr const char* kParamsFormat = "lpn-params";
constexpr int kParamsVersion = 1;

Eigen::ArrayXXd leaky(const Eigen::ArrayXXd& x, double slope) {
  return (x > 0.0).select(x, slope * x);
}

void require_input_width(const NetworkConfig& config, Eigen::Index width, const char* where) {
  if (width != config.input_dim()) {
    throw ConfigError(std::string(where) + ": expected " + std::to_string(config.input_dim()) +
                      " input features, got " + std::to_string(width));
  }
}

void require_matching(const Parameters& params, const NetworkConfig& config) {
  if (params.layers.size() != config.layer_count()) {
    throw ConfigError("parameters have " + std::to_string(params.layers.size()) +
                      " layers, config expects " + std::to_string(config.layer_count()));
  }
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    if (layer.weight.rows() != config.widths[l + 1] || layer.weight.cols() != config.widths[l] ||
        layer.bias.size() != config.widths[l + 1]) {
      throw ConfigError("layer " + std::to_string(l) + " shape does not match config");
    }
  }
}

}  // namespace

NetworkConfig NetworkConfig::standard(int input_dim) {
  NetworkConfig config;
  config.widths = {input_dim, 256, 128, 16, 1};
  return config;
}

void NetworkConfig::validate() const {
  if (widths.size() < 2) throw ConfigError("network needs at least an input and an output width");
  for (int w : widths) {
    if (w < 1) throw ConfigError("every layer width must be >= 1");
  }
  if (widths.back() != 1) throw ConfigError("output width must be 1 (scalar regression)");
  if (!(leaky_slope >= 0.0 && leaky_slope < 1.0)) throw ConfigError("leaky slope must lie in [0, 1)");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout rate must lie in [0, 1)");
  if (!(input_variance > 0.0)) throw ConfigError("input variance prior must be > 0");
  if (!(loss_exponent > 0.0 && loss_exponent <= 1.0)) throw ConfigError("loss exponent must lie in (0, 1]");
  if (!(penalty_weight >= 0.0)) throw ConfigError("penalty weight must be >= 0");
}

std::string config_hash(const NetworkConfig& config) {
  // Hex-float formatting makes the canonical text exact for every double.
  std::ostringstream canon;
  canon << "widths=";
  for (int w : config.widths) canon << w << ',';
  char buf[64];
  for (double v : {config.leaky_slope, config.dropout, config.input_variance, config.loss_exponent,
                   config.penalty_weight}) {
    std::snprintf(buf, sizeof buf, "%a;", v);
    canon << buf;
  }
  canon << "seed=" << config.seed;
  return fnv1a_hex(canon.str());
}

Eigen::Index Parameters::size() const {
  Eigen::Index n = 0;
  for (const auto& layer : layers) n += layer.weight.size() + layer.bias.size();
  return n;
}

Eigen::VectorXd Parameters::flatten() const {
  Eigen::VectorXd flat(size());
  Eigen::Index at = 0;
  for (const auto& layer : layers) {
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) flat[at++] = layer.weight(r, c);
    }
    flat.segment(at, layer.bias.size()) = layer.bias;
    at += layer.bias.size();
  }
  return flat;
}

void Parameters::assign(const Eigen::VectorXd& flat) {
  if (flat.size() != size()) throw ConfigError("Parameters::assign: size mismatch");
  Eigen::Index at = 0;
  for (auto& layer : layers) {
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = flat[at++];
    }
    layer.bias = flat.segment(at, layer.bias.size());
    at += layer.bias.size();
  }
}

bool Parameters::all_finite() const {
  for (const auto& layer : layers) {
    if (!layer.weight.allFinite() || !layer.bias.allFinite()) return false;
  }
  return true;
}

Parameters init_params(const NetworkConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  Parameters params;
  for (std::size_t l = 0; l + 1 < config.widths.size(); ++l) {
    const int fan_in = config.widths[l];
    const int fan_out = config.widths[l + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    DenseLayer layer{Eigen::MatrixXd(fan_out, fan_in), Eigen::VectorXd::Zero(fan_out)};
    for (Eigen::Index r = 0; r < fan_out; ++r) {
      for (Eigen::Index c = 0; c < fan_in; ++c) layer.weight(r, c) = dist(rng);
    }
    params.layers.push_back(std::move(layer));
  }
  return params;
}

ForwardResult forward(const Parameters& params, const NetworkConfig& config,
                      const GaussianTensor& input, bool train_mode, std::mt19937_64* rng) {
  require_matching(params, config);
  require_input_width(config, input.size(), "forward");
  if (train_mode && rng == nullptr && config.dropout > 0.0) {
    throw UsageError("forward: train mode with dropout needs a random source");
  }
  ForwardResult result;
  result.trace.push_back(input);
  GaussianTensor z = input;
  const std::size_t last = params.layers.size() - 1;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    z = filter_dense(z, params.layers[l].weight, params.layers[l].bias);
    result.trace.push_back(z);
    if (l == last) break;
    z = filter_leaky_relu(z, config.leaky_slope);
    result.trace.push_back(z);
    if (train_mode && config.dropout > 0.0) {
      z = filter_dropout(z, config.dropout, *rng, true);
      result.trace.push_back(z);
    }
  }
  result.prediction.mean = z.means()[0];
  result.prediction.variance = std::max(z.variances()[0], kPredictiveVarianceFloor);
  return result;
}

double forward_deterministic(const Parameters& params, const NetworkConfig& config,
                             const Eigen::VectorXd& x) {
  return predict_deterministic(params, config, x.transpose())[0];
}

BatchPrediction predict(const Parameters& params, const NetworkConfig& config,
                        const Eigen::MatrixXd& means, const Eigen::MatrixXd& variances) {
  require_matching(params, config);
  require_input_width(config, means.cols(), "predict");
  if (variances.rows() != means.rows() || variances.cols() != means.cols()) {
    throw ConfigError("predict: means and variances differ in shape");
  }
  Eigen::MatrixXd mean = means;
  Eigen::MatrixXd var = variances;
  const std::size_t last = params.layers.size() - 1;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    Eigen::MatrixXd next_mean = mean * layer.weight.transpose();
    next_mean.rowwise() += layer.bias.transpose();
    Eigen::MatrixXd next_var = var * layer.weight.array().square().matrix().transpose();
    if (l == last) {
      mean = std::move(next_mean);
      var = std::move(next_var);
      break;
    }
    const Eigen::ArrayXXd m = next_mean.array();
    const Eigen::ArrayXXd v = next_var.array();
    auto moments = adf::leaky_relu_moments(m, v, config.leaky_slope);
    mean = moments.mean.matrix();
    var = moments.var.matrix();
  }
  return {mean.col(0), var.col(0).array().max(kPredictiveVarianceFloor).matrix()};
}

BatchPrediction predict(const Parameters& params, const NetworkConfig& config,
                        const Eigen::MatrixXd& means) {
  return predict(params, config, means,
                 Eigen::MatrixXd::Constant(means.rows(), means.cols(), config.input_variance));
}

Eigen::VectorXd predict_deterministic(const Parameters& params, const NetworkConfig& config,
                                      const Eigen::MatrixXd& x) {
  require_matching(params, config);
  require_input_width(config, x.cols(), "predict_deterministic");
  Eigen::MatrixXd h = x;
  const std::size_t last = params.layers.size() - 1;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    Eigen::MatrixXd next = h * params.layers[l].weight.transpose();
    next.rowwise() += params.layers[l].bias.transpose();
    h = l == last ? std::move(next) : leaky(next.array(), config.leaky_slope).matrix();
  }
  return h.col(0);
}

std::vector<ad::Var> ParameterVars::all() const {
  std::vector<ad::Var> vars;
  vars.reserve(weights.size() * 2);
  for (std::size_t l = 0; l < weights.size(); ++l) {
    vars.push_back(weights[l]);
    vars.push_back(biases[l]);
  }
  return vars;
}

ParameterVars bind_parameters(ad::Tape& tape, const Parameters& params) {
  ParameterVars vars;
  for (const auto& layer : params.layers) {
    vars.weights.push_back(tape.variable(layer.weight));
    vars.biases.push_back(tape.variable(layer.bias.transpose()));
  }
  return vars;
}

Eigen::VectorXd flatten_gradients(const std::vector<ad::Tensor>& grads) {
  Eigen::Index n = 0;
  for (const auto& g : grads) n += g.size();
  Eigen::VectorXd flat(n);
  Eigen::Index at = 0;
  for (const auto& g : grads) {
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      for (Eigen::Index c = 0; c < g.cols(); ++c) flat[at++] = g(r, c);
    }
  }
  return flat;
}

DropoutMasks sample_dropout_masks(const NetworkConfig& config, Eigen::Index batch,
                                  std::mt19937_64& rng) {
  DropoutMasks masks;
  std::bernoulli_distribution keep(1.0 - config.dropout);
  for (std::size_t l = 1; l + 1 < config.widths.size(); ++l) {
    Eigen::MatrixXd mask(batch, config.widths[l]);
    for (Eigen::Index r = 0; r < batch; ++r) {
      for (Eigen::Index c = 0; c < mask.cols(); ++c) mask(r, c) = keep(rng) ? 1.0 : 0.0;
    }
    masks.keep.push_back(std::move(mask));
  }
  return masks;
}

GraphPrediction forward_graph(const ParameterVars& params, const NetworkConfig& config,
                              const ad::Var& means, const ad::Var& variances,
                              const DropoutMasks* masks) {
  require_input_width(config, means.cols(), "forward_graph");
  ad::Tape& tape = *means.tape();
  const Eigen::Index batch = means.rows();
  const double keep_scale = 1.0 / (1.0 - config.dropout);
  ad::Var mean = means;
  ad::Var var = variances;
  const std::size_t last = params.weights.size() - 1;
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    const ad::Var& w = params.weights[l];
    mean = ad::matmul_nt(mean, w) + ad::broadcast_rows(params.biases[l], batch);
    var = ad::matmul_nt(var, ad::square(w));
    if (l == last) break;
    const ad::Var first = ad::leaky_first_moment(mean, var, config.leaky_slope);
    var = ad::clamp_min(ad::leaky_second_moment(mean, var, config.leaky_slope) - ad::square(first), 0.0);
    mean = first;
    if (masks != nullptr && config.dropout > 0.0) {
      const Eigen::MatrixXd& keep = masks->keep.at(l);
      mean = mean * tape.constant(keep * keep_scale);
      var = var * tape.constant(keep * (keep_scale * keep_scale));
    }
  }
  return {mean, ad::clamp_min(var, kPredictiveVarianceFloor)};
}

ad::Var forward_deterministic_graph(const ParameterVars& params, const NetworkConfig& config,
                                    const ad::Var& x, const DropoutMasks* masks) {
  require_input_width(config, x.cols(), "forward_deterministic_graph");
  ad::Tape& tape = *x.tape();
  const Eigen::Index batch = x.rows();
  const double keep_scale = 1.0 / (1.0 - config.dropout);
  ad::Var h = x;
  const std::size_t last = params.weights.size() - 1;
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    h = ad::matmul_nt(h, params.weights[l]) + ad::broadcast_rows(params.biases[l], batch);
    if (l == last) break;
    // Piecewise-linear: the local slope is a constant of the graph.
    const Eigen::MatrixXd slope =
        (h.value().array() > 0.0).select(Eigen::ArrayXXd::Ones(h.rows(), h.cols()), config.leaky_slope);
    h = h * tape.constant(slope);
    if (masks != nullptr && config.dropout > 0.0) {
      h = h * tape.constant(masks->keep.at(l) * keep_scale);
    }
  }
  return h;
}

std::string to_string(ModelKind kind) {
  return kind == ModelKind::Probabilistic ? "lpn" : "dnn";
}

ModelKind model_kind_from_string(const std::string& name) {
  if (name == "lpn") return ModelKind::Probabilistic;
  if (name == "dnn") return ModelKind::Deterministic;
  throw ConfigError("unknown model kind '" + name + "' (expected lpn or dnn)");
}

void save_params(const std::filesystem::path& path, const ParamsFile& file) {
  require_matching(file.params, file.config);
  Json j;
  j["format"] = kParamsFormat;
  j["version"] = kParamsVersion;
  j["model"] = to_string(file.kind);
  j["config_hash"] = config_hash(file.config);
  j["experiment_hash"] = file.experiment_hash;
  j["seed"] = file.config.seed;
  j["config"] = file.config;
  Json layers = Json::array();
  for (const auto& layer : file.params.layers) {
    std::vector<double> weight(static_cast<std::size_t>(layer.weight.size()));
    std::size_t at = 0;
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) weight[at++] = layer.weight(r, c);
    }
    layers.push_back({{"rows", layer.weight.rows()},
                      {"cols", layer.weight.cols()},
                      {"weight", weight},
                      {"bias", std::vector<double>(layer.bias.begin(), layer.bias.end())}});
  }
  j["layers"] = std::move(layers);
  write_text_atomic(path, j.dump(1) + "\n");
}

ParamsFile read_params_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open parameter file " + path.string());
  Json j;
  try {
    in >> j;
  } catch (const Json::exception& e) {
    throw LoadError("parameter file " + path.string() + " is not valid JSON: " + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != kParamsFormat) {
      throw LoadError("parameter file " + path.string() + " has the wrong format tag");
    }
    if (j.at("version").get<int>() != kParamsVersion) {
      throw LoadError("unsupported parameter file version in " + path.string());
    }
    ParamsFile file;
    file.kind = model_kind_from_string(j.at("model").get<std::string>());
    file.config = j.at("config").get<NetworkConfig>();
    file.config.validate();
    if (j.at("config_hash").get<std::string>() != config_hash(file.config)) {
      throw LoadError("parameter file " + path.string() + ": config hash does not match its config");
    }
    file.experiment_hash = j.value("experiment_hash", std::string{});
    const auto& layers = j.at("layers");
    if (layers.size() != file.config.layer_count()) {
      throw LoadError("parameter file " + path.string() + ": layer count mismatch");
    }
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& lj = layers[l];
      const auto rows = lj.at("rows").get<Eigen::Index>();
      const auto cols = lj.at("cols").get<Eigen::Index>();
      const auto weight = lj.at("weight").get<std::vector<double>>();
      const auto bias = lj.at("bias").get<std::vector<double>>();
      if (rows != file.config.widths[l + 1] || cols != file.config.widths[l] ||
          static_cast<Eigen::Index>(weight.size()) != rows * cols ||
          static_cast<Eigen::Index>(bias.size()) != rows) {
        throw LoadError("parameter file " + path.string() + ": layer " + std::to_string(l) +
                        " has inconsistent shape");
      }
      DenseLayer layer{Eigen::MatrixXd(rows, cols), Eigen::VectorXd(rows)};
      std::size_t at = 0;
      for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) layer.weight(r, c) = weight[at++];
      }
      for (Eigen::Index r = 0; r < rows; ++r) layer.bias[r] = bias[static_cast<std::size_t>(r)];
      file.params.layers.push_back(std::move(layer));
    }
    if (!file.params.all_finite()) throw LoadError("parameter file " + path.string() + ": non-finite values");
    return file;
  } catch (const Json::exception& e) {
    throw LoadError("parameter file " + path.string() + " is malformed: " + e.what());
  } catch (const ConfigError& e) {
    throw LoadError("parameter file " + path.string() + ": " + e.what());
  }
}

Parameters load_params(const std::filesystem::path& path, const NetworkConfig& expected) {
  ParamsFile file = read_params_file(path);
  if (!(file.config == expected)) {
    throw LoadError("parameter file " + path.string() + " was written for config " +
                    config_hash(file.config) + ", expected " + config_hash(expected));
  }
  return std::move(file.params);
}

}  // namespace lpn
