#include "lpn/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "lpn/errors.hpp"
#include "lpn/report.hpp"

namespace lpn {

namespace {

namespace pt = boost::property_tree;

const std::map<std::string, std::set<std::string>> kKnownKeys = {
    {"network", {"hidden", "leaky_slope", "dropout", "delta", "k", "lambda", "seed"}},
    {"train",
     {"learning_rate", "beta1", "beta2", "epsilon", "batch_size", "epochs_phase1",
      "epochs_phase2", "phase2", "folds", "seed", "model"}},
    {"data", {"dataset", "path", "split_fraction", "seed"}},
    {"gap", {"factors", "learning_rate", "max_iterations", "tolerance", "warm_start"}},
};

template <class T>
void read(const pt::ptree& section, const std::string& name, const std::string& key, T& out) {
  const auto value = section.get_optional<std::string>(key);
  if (!value) return;
  const std::string text = boost::algorithm::trim_copy(*value);
  std::istringstream in(text);
  T parsed{};
  if constexpr (std::is_same_v<T, bool>) {
    if (text == "true" || text == "1" || text == "yes") {
      parsed = true;
    } else if (text == "false" || text == "0" || text == "no") {
      parsed = false;
    } else {
      throw ConfigError("[" + name + "] " + key + ": expected true or false, got '" + text + "'");
    }
  } else if constexpr (std::is_same_v<T, std::string>) {
    parsed = text;
  } else {
    in >> parsed;
    if (!in || !(in >> std::ws).eof()) {
      throw ConfigError("[" + name + "] " + key + ": cannot parse '" + text + "'");
    }
  }
  out = parsed;
}

template <class T>
std::vector<T> parse_list(const std::string& name, const std::string& key, const std::string& text) {
  std::vector<std::string> parts;
  boost::algorithm::split(parts, text, boost::is_any_of(", "), boost::token_compress_on);
  std::vector<T> out;
  for (auto& part : parts) {
    boost::algorithm::trim(part);
    if (part.empty()) continue;
    std::istringstream in(part);
    T v{};
    in >> v;
    if (!in || !(in >> std::ws).eof()) {
      throw ConfigError("[" + name + "] " + key + ": cannot parse list entry '" + part + "'");
    }
    out.push_back(v);
  }
  return out;
}

}  // namespace

NetworkConfig ExperimentConfig::network_for(int input_dim) const {
  NetworkConfig net = network;
  net.widths.clear();
  net.widths.push_back(input_dim);
  net.widths.insert(net.widths.end(), hidden.begin(), hidden.end());
  net.widths.push_back(1);
  return net;
}

void ExperimentConfig::set_seed(std::uint64_t seed) {
  network.seed = seed;
  train.seed = seed;
  data.seed = seed;
}

void ExperimentConfig::validate() const {
  if (hidden.empty()) throw ConfigError("[network] hidden: at least one hidden layer is required");
  network_for(1).validate();
  train.validate();
  if (!(data.split_fraction > 0.0 && data.split_fraction < 1.0)) {
    throw ConfigError("[data] split_fraction must lie in (0, 1)");
  }
  if (!(gap.learning_rate > 0.0)) throw ConfigError("[gap] learning_rate must be > 0");
  if (gap.max_iterations < 1) throw ConfigError("[gap] max_iterations must be >= 1");
  if (!(gap.tolerance > 0.0)) throw ConfigError("[gap] tolerance must be > 0");
  for (double t : gap_factors) {
    if (!(t >= 1.0)) throw ConfigError("[gap] factors must all be >= 1");
  }
  if (!std::is_sorted(gap_factors.begin(), gap_factors.end())) {
    throw ConfigError("[gap] factors must be ascending");
  }
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json net = network;
  net.erase("widths");
  net["hidden"] = hidden;
  return {{"network", net},
          {"train", train},
          {"data",
           {{"dataset", data.dataset},
            {"path", data.path.generic_string()},
            {"split_fraction", data.split_fraction},
            {"seed", data.seed}}},
          {"gap", {{"factors", gap_factors}, {"calibration", gap}}}};
}

std::string ExperimentConfig::hash() const { return fnv1a_hex(to_json().dump()); }

ExperimentConfig parse_experiment_config(const std::string& ini_text) {
  pt::ptree tree;
  std::istringstream in(ini_text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  for (const auto& [name, section] : tree) {
    const auto known = kKnownKeys.find(name);
    if (known == kKnownKeys.end()) throw ConfigError("config: unknown section [" + name + "]");
    if (!section.data().empty()) throw ConfigError("config: key '" + name + "' outside a section");
    for (const auto& [key, value] : section) {
      if (!known->second.contains(key)) {
        throw ConfigError("config: unknown key '" + key + "' in [" + name + "]");
      }
    }
  }

  ExperimentConfig c;
  const pt::ptree empty;
  auto section = [&](const char* name) -> const pt::ptree& {
    const auto child = tree.get_child_optional(name);
    return child ? *child : empty;
  };

  const pt::ptree& net = section("network");
  if (const auto hidden = net.get_optional<std::string>("hidden")) {
    c.hidden = parse_list<int>("network", "hidden", *hidden);
  }
  read(net, "network", "leaky_slope", c.network.leaky_slope);
  read(net, "network", "dropout", c.network.dropout);
  read(net, "network", "delta", c.network.input_variance);
  read(net, "network", "k", c.network.loss_exponent);
  read(net, "network", "lambda", c.network.penalty_weight);
  read(net, "network", "seed", c.network.seed);

  const pt::ptree& train = section("train");
  read(train, "train", "learning_rate", c.train.adam.learning_rate);
  read(train, "train", "beta1", c.train.adam.beta1);
  read(train, "train", "beta2", c.train.adam.beta2);
  read(train, "train", "epsilon", c.train.adam.epsilon);
  read(train, "train", "batch_size", c.train.batch_size);
  read(train, "train", "epochs_phase1", c.train.epochs_phase1);
  read(train, "train", "epochs_phase2", c.train.epochs_phase2);
  read(train, "train", "phase2", c.train.phase2);
  read(train, "train", "folds", c.train.folds);
  read(train, "train", "seed", c.train.seed);
  std::string model = to_string(c.train.model);
  read(train, "train", "model", model);
  c.train.model = model_kind_from_string(model);

  const pt::ptree& data = section("data");
  read(data, "data", "dataset", c.data.dataset);
  std::string path;
  read(data, "data", "path", path);
  c.data.path = path;
  read(data, "data", "split_fraction", c.data.split_fraction);
  read(data, "data", "seed", c.data.seed);

  const pt::ptree& gap = section("gap");
  if (const auto factors = gap.get_optional<std::string>("factors")) {
    c.gap_factors = parse_list<double>("gap", "factors", *factors);
  }
  read(gap, "gap", "learning_rate", c.gap.learning_rate);
  read(gap, "gap", "max_iterations", c.gap.max_iterations);
  read(gap, "gap", "tolerance", c.gap.tolerance);
  read(gap, "gap", "warm_start", c.gap.warm_start);

  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  ExperimentConfig c = parse_experiment_config(text.str());
  // Relative data paths are taken relative to the config file.
  if (!c.data.path.empty() && c.data.path.is_relative()) {
    c.data.path = path.parent_path() / c.data.path;
  }
  return c;
}

CsvSchema builtin_schema(const std::string& dataset) {
  if (dataset == "parkinsons") return {"total_UPDRS", {"subject#", "test_time", "motor_UPDRS"}};
  if (dataset == "energy") return {"Appliances", {"date"}};
  throw ConfigError("no built-in schema for dataset '" + dataset + "'");
}

std::filesystem::path data_dir() {
  if (const char* dir = std::getenv("LPN_DATA_DIR"); dir != nullptr && *dir != '\0') return dir;
  return "data";
}

std::filesystem::path default_data_path(const std::string& dataset) {
  if (dataset == "parkinsons") return data_dir() / "parkinsons_updrs.data";
  if (dataset == "energy") return data_dir() / "energydata_complete.csv";
  throw ConfigError("no default file for dataset '" + dataset + "'");
}

Dataset load_dataset(const DataConfig& config) {
  const std::string prefix = "synthetic:";
  if (config.dataset.starts_with(prefix)) {
    return make_synthetic(config.dataset.substr(prefix.size()), config.seed);
  }
  const CsvSchema schema = builtin_schema(config.dataset);
  const auto path = config.path.empty() ? default_data_path(config.dataset) : config.path;
  Dataset d = load_csv(path, schema);
  d.provenance = config.dataset + ":" + path.filename().string();
  return d;
}

}  // namespace lpn
