#pragma once

// Report payloads, JSON conversions, and SVG rendering.
//
// Every report file is {"payload": {...}, "meta": {...}}. The payload is a
// deterministic function of config, seed and data; "meta" carries wall-clock
// and timestamp fields that are excluded from reproducibility comparisons.

#include <filesystem>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "lpn/model.hpp"
#include "lpn/objectives.hpp"
#include "lpn/trainer.hpp"
#include "lpn/uq.hpp"

namespace lpn {

using Json = nlohmann::json;

std::string fnv1a_hex(std::string_view text);

/// Writes to a sibling temporary file, then renames over `path`.
void write_text_atomic(const std::filesystem::path& path, const std::string& content);

Json read_json(const std::filesystem::path& path);

void to_json(Json& j, const NetworkConfig& c);
void from_json(const Json& j, NetworkConfig& c);
void to_json(Json& j, const AdamConfig& c);
void from_json(const Json& j, AdamConfig& c);
void to_json(Json& j, const TrainConfig& c);
void from_json(const Json& j, TrainConfig& c);
void to_json(Json& j, const CalibrationConfig& c);
void from_json(const Json& j, CalibrationConfig& c);

Json to_json(const TrainReport& report);
Json to_json(const GapProfile& profile, const std::vector<std::string>& feature_names);

/// Wraps a payload with meta information and writes it atomically.
void write_report(const std::filesystem::path& path, const Json& payload, const Json& meta);

/// Library version and creation time, for the "meta" block.
Json default_meta();

struct BarChart {
  std::string title;
  std::string value_label;
  std::vector<std::string> labels;
  std::vector<double> values;
};

struct LineSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct LineChart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<LineSeries> series;
};

/// Horizontal bars, one per label, with the data embedded as <metadata>.
std::string render_svg(const BarChart& chart);
std::string render_svg(const LineChart& chart);

/// Charts rebuilt from report payloads; the CLI renders only through these.
BarChart relevance_chart(const Json& relevance_payload);
LineChart mask_sweep_chart(const Json& mask_sweep_payload);
BarChart gap_chart(const Json& gap_sample_payload);

}  // namespace lpn
