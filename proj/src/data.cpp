#include "lpn/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "lpn/errors.hpp"

namespace lpn {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(trim(field));
      field.clear();
    } else {
      field += ch;
    }
  }
  fields.push_back(trim(field));
  return fields;
}

bool parse_double(const std::string& text, double& out) {
  if (text.empty()) return false;
  const char* begin = text.data();
  const char* end = begin + text.size();
  if (*begin == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

double median_of(std::vector<double> values) {
  const std::size_t n = values.size();
  const std::size_t mid = n / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double upper = values[mid];
  if (n % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

}  // namespace

Dataset Dataset::subset(const std::vector<std::size_t>& rows) const {
  Dataset out;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), dim());
  out.target.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(rows[i]);
    out.features.row(static_cast<Eigen::Index>(i)) = features.row(r);
    out.target[static_cast<Eigen::Index>(i)] = target[r];
  }
  out.feature_names = feature_names;
  out.target_name = target_name;
  out.provenance = provenance;
  return out;
}

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || trim(line).empty()) {
    throw IngestionError(path.string() + " is empty");
  }
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const std::vector<std::string> header = split_csv_line(line);

  const auto target_it = std::find(header.begin(), header.end(), schema.target);
  if (target_it == header.end()) {
    throw IngestionError(path.string() + " has no target column '" + schema.target + "'");
  }
  const auto target_col = static_cast<std::size_t>(target_it - header.begin());
  const std::set<std::string> dropped(schema.drop.begin(), schema.drop.end());

  Dataset data;
  data.target_name = schema.target;
  data.provenance = path.filename().string();
  std::vector<std::size_t> feature_cols;
  std::set<std::string> seen;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c == target_col || dropped.count(header[c]) != 0) continue;
    if (!seen.insert(header[c]).second) {
      throw IngestionError(path.string() + " has duplicate column '" + header[c] + "'");
    }
    feature_cols.push_back(c);
    data.feature_names.push_back(header[c]);
  }
  if (feature_cols.empty()) throw IngestionError(path.string() + " has no feature columns");

  std::vector<double> values;
  std::vector<double> targets;
  std::vector<double> row(feature_cols.size());
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const std::vector<std::string> fields = split_csv_line(line);
    bool ok = fields.size() == header.size();
    double y = 0.0;
    ok = ok && parse_double(fields[target_col], y);
    for (std::size_t j = 0; ok && j < feature_cols.size(); ++j) {
      ok = parse_double(fields[feature_cols[j]], row[j]);
    }
    if (!ok) {
      ++data.rejected_rows;
      continue;
    }
    values.insert(values.end(), row.begin(), row.end());
    targets.push_back(y);
  }
  if (targets.empty()) throw IngestionError(path.string() + " has no parseable data rows");

  const auto n = static_cast<Eigen::Index>(targets.size());
  const auto d = static_cast<Eigen::Index>(feature_cols.size());
  data.features = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      values.data(), n, d);
  data.target = Eigen::Map<const Eigen::VectorXd>(targets.data(), n);
  if (data.rejected_rows > 0) {
    data.warnings.push_back(std::to_string(data.rejected_rows) + " rows rejected (unparseable cells)");
  }
  return data;
}

SplitIndices split(std::size_t n, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("split fraction must lie in (0, 1)");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  SplitIndices out;
  out.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.validation.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  return out;
}

Standardizer Standardizer::fit(const Dataset& train) {
  if (train.size() < 2) throw ConfigError("standardization needs at least two training rows");
  Standardizer s;
  std::vector<double> means, stddevs, medians;
  for (Eigen::Index j = 0; j < train.dim(); ++j) {
    const Eigen::VectorXd col = train.features.col(j);
    const double mean = col.mean();
    const double sd = std::sqrt((col.array() - mean).square().mean());
    if (!(sd > 0.0)) {
      s.warnings_.push_back("feature '" + train.feature_names[static_cast<std::size_t>(j)] +
                            "' has zero spread on the training split and was dropped");
      continue;
    }
    s.retained_.push_back(j);
    s.names_.push_back(train.feature_names[static_cast<std::size_t>(j)]);
    means.push_back(mean);
    stddevs.push_back(sd);
    medians.push_back(median_of(std::vector<double>(col.begin(), col.end())));
  }
  if (s.retained_.empty()) throw ConfigError("every feature has zero spread on the training split");
  s.mean_ = Eigen::Map<Eigen::VectorXd>(means.data(), static_cast<Eigen::Index>(means.size()));
  s.stddev_ = Eigen::Map<Eigen::VectorXd>(stddevs.data(), static_cast<Eigen::Index>(stddevs.size()));
  s.median_ = Eigen::Map<Eigen::VectorXd>(medians.data(), static_cast<Eigen::Index>(medians.size()));
  s.target_mean_ = train.target.mean();
  s.target_stddev_ = std::sqrt((train.target.array() - s.target_mean_).square().mean());
  if (!(s.target_stddev_ > 0.0)) throw ConfigError("target has zero spread on the training split");
  return s;
}

Eigen::MatrixXd Standardizer::transform(const Eigen::MatrixXd& raw) const {
  Eigen::MatrixXd out(raw.rows(), static_cast<Eigen::Index>(retained_.size()));
  for (std::size_t k = 0; k < retained_.size(); ++k) {
    const auto j = static_cast<Eigen::Index>(k);
    out.col(j) = ((raw.col(retained_[k]).array() - mean_[j]) / stddev_[j]).matrix();
  }
  return out;
}

Eigen::MatrixXd Standardizer::inverse_transform(const Eigen::MatrixXd& standardized) const {
  Eigen::MatrixXd out(standardized.rows(), standardized.cols());
  for (Eigen::Index j = 0; j < standardized.cols(); ++j) {
    out.col(j) = (standardized.col(j).array() * stddev_[j] + mean_[j]).matrix();
  }
  return out;
}

Eigen::VectorXd Standardizer::transform_target(const Eigen::VectorXd& y) const {
  return ((y.array() - target_mean_) / target_stddev_).matrix();
}

Eigen::VectorXd Standardizer::inverse_transform_target(const Eigen::VectorXd& y) const {
  return (y.array() * target_stddev_ + target_mean_).matrix();
}

Eigen::VectorXd Standardizer::standardized_median() const {
  return ((median_.array() - mean_.array()) / stddev_.array()).matrix();
}

PreparedSplit prepare_split(const Dataset& data, const SplitIndices& indices) {
  const Dataset train = data.subset(indices.train);
  const Dataset validation = data.subset(indices.validation);
  PreparedSplit out;
  out.stats = Standardizer::fit(train);
  out.x_train = out.stats.transform(train.features);
  out.y_train = out.stats.transform_target(train.target);
  out.x_validation = out.stats.transform(validation.features);
  out.y_validation = out.stats.transform_target(validation.target);
  out.indices = indices;
  return out;
}

Dataset make_synthetic(const std::string& kind, std::uint64_t seed) {
  constexpr Eigen::Index n = 2000;
  constexpr double noise_sd = 0.1;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto draw = [&](Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = normal(rng);
    }
    return m;
  };

  Dataset data;
  data.target_name = "y";
  data.provenance = "synthetic:" + kind;
  if (kind == "linear-1d") {
    data.features = draw(n, 1);
    data.feature_names = {"x1"};
    data.target = 3.0 * data.features.col(0) + noise_sd * draw(n, 1).col(0);
  } else if (kind == "linear-2d-dead-feature") {
    data.features = draw(n, 2);
    data.feature_names = {"x1", "x2"};
    data.target = 3.0 * data.features.col(0) + noise_sd * draw(n, 1).col(0);
  } else if (kind == "noisy-feature") {
    data.features = draw(n, 3);
    data.feature_names = {"x1", "x2", "x3"};
    const auto x1 = data.features.col(0).array();
    const auto x2 = data.features.col(1).array();
    data.target = (2.0 * x1 - x2 + 0.5 * x1 * x2).matrix() + noise_sd * draw(n, 1).col(0);
  } else {
    throw ConfigError("unknown synthetic dataset '" + kind + "'");
  }
  return data;
}

}  // namespace lpn
