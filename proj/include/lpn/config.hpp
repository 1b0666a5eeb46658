#pragma once

// Experiment configuration: an INI file with [network], [train], [data] and
// [gap] sections. Every key is optional; unknown keys are rejected so typos
// do not silently fall back to defaults.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lpn/data.hpp"
#include "lpn/model.hpp"
#include "lpn/trainer.hpp"
#include "lpn/uq.hpp"

namespace lpn {

struct DataConfig {
  /// parkinsons, energy, or synthetic:<kind>.
  std::string dataset = "synthetic:linear-1d";
  /// CSV location; empty means <data dir>/<default file name>.
  std::filesystem::path path;
  double split_fraction = 0.8;
  std::uint64_t seed = 0;

  bool operator==(const DataConfig&) const = default;
};

struct ExperimentConfig {
  std::vector<int> hidden = {256, 128, 16};
  /// Everything except widths, which depend on the loaded data.
  NetworkConfig network;
  TrainConfig train;
  DataConfig data;
  std::vector<double> gap_factors = kDefaultGapFactors;
  CalibrationConfig gap;

  /// The network for `input_dim` retained features.
  NetworkConfig network_for(int input_dim) const;
  /// Sets the network, training and split seeds at once.
  void set_seed(std::uint64_t seed);
  void validate() const;

  nlohmann::json to_json() const;
  /// Hash of the canonical JSON form; any field change alters it.
  std::string hash() const;

  bool operator==(const ExperimentConfig&) const = default;
};

ExperimentConfig parse_experiment_config(const std::string& ini_text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Column roles for the two public datasets. Throws ConfigError otherwise.
CsvSchema builtin_schema(const std::string& dataset);

/// $LPN_DATA_DIR if set, else ./data.
std::filesystem::path data_dir();
std::filesystem::path default_data_path(const std::string& dataset);

/// Loads or generates the configured dataset (raw units).
Dataset load_dataset(const DataConfig& config);

}  // namespace lpn
