#include "lpn/report.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

#include "lpn/errors.hpp"

namespace lpn {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string px(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape_xml(std::string_view s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};

}  // namespace

std::string fnv1a_hex(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_text_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw Error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw LoadError(path.string() + " is not valid JSON: " + e.what());
  }
}

void to_json(Json& j, const NetworkConfig& c) {
  j = Json{{"widths", c.widths},
           {"leaky_slope", c.leaky_slope},
           {"dropout", c.dropout},
           {"input_variance", c.input_variance},
           {"loss_exponent", c.loss_exponent},
           {"penalty_weight", c.penalty_weight},
           {"seed", c.seed}};
}

void from_json(const Json& j, NetworkConfig& c) {
  c.widths = j.at("widths").get<std::vector<int>>();
  c.leaky_slope = j.at("leaky_slope").get<double>();
  c.dropout = j.at("dropout").get<double>();
  c.input_variance = j.at("input_variance").get<double>();
  c.loss_exponent = j.at("loss_exponent").get<double>();
  c.penalty_weight = j.at("penalty_weight").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
}

void to_json(Json& j, const AdamConfig& c) {
  j = Json{{"learning_rate", c.learning_rate},
           {"beta1", c.beta1},
           {"beta2", c.beta2},
           {"epsilon", c.epsilon}};
}

void from_json(const Json& j, AdamConfig& c) {
  c.learning_rate = j.at("learning_rate").get<double>();
  c.beta1 = j.at("beta1").get<double>();
  c.beta2 = j.at("beta2").get<double>();
  c.epsilon = j.at("epsilon").get<double>();
}

void to_json(Json& j, const TrainConfig& c) {
  j = Json{{"adam", c.adam},
           {"batch_size", c.batch_size},
           {"epochs_phase1", c.epochs_phase1},
           {"epochs_phase2", c.epochs_phase2},
           {"phase2", c.phase2},
           {"folds", c.folds},
           {"seed", c.seed},
           {"model", to_string(c.model)}};
}

void from_json(const Json& j, TrainConfig& c) {
  c.adam = j.at("adam").get<AdamConfig>();
  c.batch_size = j.at("batch_size").get<int>();
  c.epochs_phase1 = j.at("epochs_phase1").get<int>();
  c.epochs_phase2 = j.at("epochs_phase2").get<int>();
  c.phase2 = j.at("phase2").get<bool>();
  c.folds = j.at("folds").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.model = model_kind_from_string(j.at("model").get<std::string>());
}

void to_json(Json& j, const CalibrationConfig& c) {
  j = Json{{"learning_rate", c.learning_rate},
           {"max_iterations", c.max_iterations},
           {"tolerance", c.tolerance},
           {"warm_start", c.warm_start}};
}

void from_json(const Json& j, CalibrationConfig& c) {
  c.learning_rate = j.at("learning_rate").get<double>();
  c.max_iterations = j.at("max_iterations").get<int>();
  c.tolerance = j.at("tolerance").get<double>();
  c.warm_start = j.at("warm_start").get<bool>();
}

Json to_json(const TrainReport& report) {
  Json epochs = Json::array();
  for (const auto& e : report.epochs) {
    epochs.push_back({{"phase", e.phase},
                      {"epoch", e.epoch},
                      {"train_loss", e.train_loss},
                      {"validation_loss", e.validation_loss},
                      {"validation_r2", e.validation_r2},
                      {"validation_rmse", e.validation_rmse}});
  }
  return Json{{"epochs", std::move(epochs)},
              {"final",
               {{"validation_loss", report.final_metrics.validation_loss},
                {"validation_r2", report.final_metrics.validation_r2},
                {"validation_rmse", report.final_metrics.validation_rmse}}}};
}

Json to_json(const GapProfile& profile, const std::vector<std::string>& feature_names) {
  Json sigma = Json::array();
  for (Eigen::Index i = 0; i < profile.sigma.rows(); ++i) {
    sigma.push_back(std::vector<double>(profile.sigma.row(i).begin(), profile.sigma.row(i).end()));
  }
  Json gap = Json::array();
  for (Eigen::Index j = 0; j < profile.gap.size(); ++j) {
    gap.push_back({{"feature", feature_names.at(static_cast<std::size_t>(j))}, {"score", profile.gap[j]}});
  }
  std::vector<bool> converged(profile.converged.begin(), profile.converged.end());
  return Json{{"baseline_mean", profile.baseline_mean},
              {"baseline_variance", profile.baseline_variance},
              {"factors", profile.factors},
              {"achieved_variance", profile.achieved_variance},
              {"sigma", std::move(sigma)},
              {"iterations", profile.iterations},
              {"converged", converged},
              {"all_converged", profile.all_converged()},
              {"gap", std::move(gap)}};
}

Json default_meta() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return Json{{"library_version", LPN_VERSION}, {"created_utc", buf}};
}

void write_report(const std::filesystem::path& path, const Json& payload, const Json& meta) {
  Json doc{{"payload", payload}, {"meta", meta}};
  write_text_atomic(path, doc.dump(1) + "\n");
}

std::string render_svg(const BarChart& chart) {
  const double bar_h = 18.0;
  const double gap = 6.0;
  const double left = 170.0;
  const double width = 440.0;
  const double top = 40.0;
  const double height = top + static_cast<double>(chart.values.size()) * (bar_h + gap) + 40.0;
  double max_value = 0.0;
  for (double v : chart.values) max_value = std::max(max_value, v);
  if (!(max_value > 0.0)) max_value = 1.0;

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << px(left + width + 90.0)
      << "\" height=\"" << px(height) << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<metadata>\n<table>\n";
  for (std::size_t i = 0; i < chart.values.size(); ++i) {
    svg << "<row label=\"" << escape_xml(chart.labels[i]) << "\" value=\"" << fmt(chart.values[i])
        << "\"/>\n";
  }
  svg << "</table>\n</metadata>\n";
  svg << "<text x=\"10\" y=\"20\" font-size=\"14\">" << escape_xml(chart.title) << "</text>\n";
  for (std::size_t i = 0; i < chart.values.size(); ++i) {
    const double y = top + static_cast<double>(i) * (bar_h + gap);
    const double w = width * std::max(0.0, chart.values[i]) / max_value;
    svg << "<text x=\"" << px(left - 6.0) << "\" y=\"" << px(y + 13.0) << "\" text-anchor=\"end\">"
        << escape_xml(chart.labels[i]) << "</text>\n";
    svg << "<rect x=\"" << px(left) << "\" y=\"" << px(y) << "\" width=\"" << px(w)
        << "\" height=\"" << px(bar_h) << "\" fill=\"" << kPalette[0] << "\"/>\n";
    svg << "<text x=\"" << px(left + w + 4.0) << "\" y=\"" << px(y + 13.0) << "\">"
        << fmt(chart.values[i]) << "</text>\n";
  }
  svg << "<text x=\"" << px(left) << "\" y=\"" << px(height - 12.0) << "\">"
      << escape_xml(chart.value_label) << "</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

std::string render_svg(const LineChart& chart) {
  const double left = 60.0, top = 40.0, width = 480.0, height = 300.0;
  double x_min = 0.0, x_max = 1.0, y_min = 0.0, y_max = 1.0;
  bool first = true;
  for (const auto& s : chart.series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (first) {
        x_min = x_max = s.x[i];
        y_min = y_max = s.y[i];
        first = false;
      }
      x_min = std::min(x_min, s.x[i]);
      x_max = std::max(x_max, s.x[i]);
      y_min = std::min(y_min, s.y[i]);
      y_max = std::max(y_max, s.y[i]);
    }
  }
  if (x_max <= x_min) x_max = x_min + 1.0;
  if (y_max <= y_min) y_max = y_min + 1.0;
  auto sx = [&](double x) { return left + width * (x - x_min) / (x_max - x_min); };
  auto sy = [&](double y) { return top + height - height * (y - y_min) / (y_max - y_min); };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << px(left + width + 180.0)
      << "\" height=\"" << px(top + height + 60.0)
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<metadata>\n<table>\n";
  for (const auto& s : chart.series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      svg << "<row series=\"" << escape_xml(s.name) << "\" x=\"" << fmt(s.x[i]) << "\" y=\""
          << fmt(s.y[i]) << "\"/>\n";
    }
  }
  svg << "</table>\n</metadata>\n";
  svg << "<text x=\"10\" y=\"20\" font-size=\"14\">" << escape_xml(chart.title) << "</text>\n";
  svg << "<rect x=\"" << px(left) << "\" y=\"" << px(top) << "\" width=\"" << px(width)
      << "\" height=\"" << px(height) << "\" fill=\"none\" stroke=\"#888\"/>\n";
  svg << "<text x=\"" << px(left) << "\" y=\"" << px(top + height + 16.0) << "\">" << fmt(x_min)
      << "</text>\n";
  svg << "<text x=\"" << px(left + width) << "\" y=\"" << px(top + height + 16.0)
      << "\" text-anchor=\"end\">" << fmt(x_max) << "</text>\n";
  svg << "<text x=\"" << px(left - 4.0) << "\" y=\"" << px(top + height) << "\" text-anchor=\"end\">"
      << fmt(y_min) << "</text>\n";
  svg << "<text x=\"" << px(left - 4.0) << "\" y=\"" << px(top + 10.0) << "\" text-anchor=\"end\">"
      << fmt(y_max) << "</text>\n";
  svg << "<text x=\"" << px(left + width / 2.0) << "\" y=\"" << px(top + height + 36.0)
      << "\" text-anchor=\"middle\">" << escape_xml(chart.x_label) << "</text>\n";
  svg << "<text x=\"14\" y=\"" << px(top + height / 2.0) << "\" transform=\"rotate(-90 14 "
      << px(top + height / 2.0) << ")\" text-anchor=\"middle\">" << escape_xml(chart.y_label)
      << "</text>\n";
  for (std::size_t k = 0; k < chart.series.size(); ++k) {
    const auto& s = chart.series[k];
    const char* color = kPalette[k % std::size(kPalette)];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      svg << (i ? " " : "") << px(sx(s.x[i])) << "," << px(sy(s.y[i]));
    }
    svg << "\"/>\n";
    svg << "<text x=\"" << px(left + width + 10.0) << "\" y=\""
        << px(top + 14.0 + 18.0 * static_cast<double>(k)) << "\" fill=\"" << color << "\">"
        << escape_xml(s.name) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

BarChart relevance_chart(const Json& payload) {
  BarChart chart;
  chart.title = "Feature relevance (" + payload.at("method").get<std::string>() + ")";
  chart.value_label = "mean relevance score";
  for (const auto& f : payload.at("features")) {
    chart.labels.push_back(f.at("name").get<std::string>());
    chart.values.push_back(f.at("score").get<double>());
  }
  return chart;
}

LineChart mask_sweep_chart(const Json& payload) {
  LineChart chart;
  chart.title = "Validation R2 while masking features (" +
                payload.at("method").get<std::string>() + ")";
  chart.x_label = "masked features";
  chart.y_label = "validation R2";
  for (const auto& curve : payload.at("curves")) {
    LineSeries s;
    s.name = curve.at("order").get<std::string>();
    for (int m : curve.at("masked_count").get<std::vector<int>>()) s.x.push_back(m);
    s.y = curve.at("r2").get<std::vector<double>>();
    chart.series.push_back(std::move(s));
  }
  return chart;
}

BarChart gap_chart(const Json& sample) {
  BarChart chart;
  chart.title = "Uncertainty gap, sample " + std::to_string(sample.at("sample_id").get<long>());
  chart.value_label = "gap score";
  for (const auto& f : sample.at("profile").at("gap")) {
    chart.labels.push_back(f.at("feature").get<std::string>());
    chart.values.push_back(f.at("score").get<double>());
  }
  return chart;
}

}  // namespace lpn
