#include "lpn/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "lpn/config.hpp"
#include "lpn/errors.hpp"
#include "lpn/objectives.hpp"
#include "lpn/report.hpp"
#include "lpn/selfcheck.hpp"

namespace lpn {

namespace {

namespace fs = std::filesystem;

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::string dataset;
};

/// Everything a verb needs once config and data are loaded.
struct Experiment {
  ExperimentConfig config;
  Dataset data;
  PreparedSplit split;
  NetworkConfig network;
};

ExperimentConfig resolve_config(const CommonOptions& o) {
  ExperimentConfig c = o.config.empty() ? ExperimentConfig{} : load_experiment_config(o.config);
  if (!o.dataset.empty() && o.dataset != c.data.dataset) {
    c.data.dataset = o.dataset;
    c.data.path.clear();
  }
  if (o.seed) c.set_seed(*o.seed);
  c.validate();
  return c;
}

Experiment load_experiment(const CommonOptions& o) {
  Experiment e;
  e.config = resolve_config(o);
  e.data = load_dataset(e.config.data);
  const SplitIndices indices =
      split(static_cast<std::size_t>(e.data.size()), e.config.data.split_fraction, e.config.data.seed);
  e.split = prepare_split(e.data, indices);
  e.network = e.config.network_for(static_cast<int>(e.split.x_train.cols()));
  for (const auto& w : e.split.stats.warnings()) std::cerr << "warning: " << w << "\n";
  return e;
}

ParamsFile load_matching_params(const fs::path& path, const Experiment& e) {
  ParamsFile file = read_params_file(path);
  if (!(file.config == e.network)) {
    throw UsageError(path.string() + ": network configuration differs from the experiment (hash " +
                     config_hash(file.config) + " vs " + config_hash(e.network) + ")");
  }
  if (!file.experiment_hash.empty() && file.experiment_hash != e.config.hash()) {
    throw UsageError(path.string() + " was trained under experiment " + file.experiment_hash +
                     ", the current configuration hashes to " + e.config.hash() +
                     " (same --config and --seed are required)");
  }
  return file;
}

Json dataset_summary(const Experiment& e) {
  return Json{{"name", e.config.data.dataset},
              {"provenance", e.data.provenance},
              {"rows", e.data.size()},
              {"rejected_rows", e.data.rejected_rows},
              {"features", e.split.feature_names()},
              {"train_rows", e.split.x_train.rows()},
              {"validation_rows", e.split.x_validation.rows()}};
}

Json header(const std::string& command, const Experiment& e) {
  return Json{{"command", command},
              {"experiment_hash", e.config.hash()},
              {"config_hash", config_hash(e.network)},
              {"seed", e.config.train.seed}};
}

std::vector<std::size_t> parse_ids(const std::string& text) {
  std::vector<std::size_t> ids;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    long long v = -1;
    try {
      v = std::stoll(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || v < 0) throw UsageError("bad sample id '" + item + "'");
    ids.push_back(static_cast<std::size_t>(v));
  }
  if (ids.empty()) throw UsageError("no sample ids given");
  return ids;
}

std::vector<double> parse_factors(const std::string& text) {
  std::vector<double> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) throw UsageError("bad factor '" + item + "'");
    out.push_back(v);
  }
  return out;
}

void progress(const EpochRecord& r) {
  if (r.epoch % 10 == 0) {
    char line[128];
    std::snprintf(line, sizeof line, "phase %d epoch %4d  train %.4f  val %.4f  R2 %.4f\n", r.phase, r.epoch,
                  r.train_loss, r.validation_loss, r.validation_r2);
    std::cerr << line;
  }
}

Json with_wall_clock(double seconds) {
  Json meta = default_meta();
  meta["wall_clock_seconds"] = seconds;
  return meta;
}

// ---- Verbs --------------------------------------------------------------------

int cmd_train(const CommonOptions& o, bool cv, bool quiet) {
  Experiment e = load_experiment(o);
  const EpochCallback cb = quiet ? EpochCallback{} : EpochCallback{progress};
  const fs::path out = o.out;
  if (cv) {
    const auto started = std::chrono::steady_clock::now();
    const CrossValidationReport r = cross_validate(e.data, e.network, e.config.train, cb);
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    Json folds = Json::array();
    for (const auto& f : r.folds) folds.push_back(to_json(f));
    Json payload = header("train-cv", e);
    payload["config"] = e.config.to_json();
    payload["dataset"] = dataset_summary(e);
    payload["model"] = to_string(e.config.train.model);
    payload["folds"] = std::move(folds);
    payload["mean_validation_r2"] = r.mean_r2;
    payload["stddev_validation_r2"] = r.stddev_r2;
    write_report(out / "cv_report.json", payload, with_wall_clock(seconds));
    std::cout << "cross-validated R2 " << r.mean_r2 << " +/- " << r.stddev_r2 << "\n";
    return 0;
  }
  const TrainResult result = train(e.split, e.network, e.config.train, cb);
  Json payload = header("train", e);
  payload["config"] = e.config.to_json();
  payload["dataset"] = dataset_summary(e);
  payload["model"] = to_string(e.config.train.model);
  payload["report"] = to_json(result.report);
  save_params(out / "params.json",
              ParamsFile{e.network, result.params, e.config.train.model, e.config.hash()});
  write_report(out / "train_report.json", payload, with_wall_clock(result.report.wall_clock_seconds));
  std::cout << "validation R2 " << result.report.final_metrics.validation_r2 << "\n";
  return 0;
}

int cmd_evaluate(const CommonOptions& o, const std::string& params_path) {
  const Experiment e = load_experiment(o);
  const ParamsFile file = load_matching_params(params_path, e);
  const FoldMetrics m =
      evaluate(file.params, e.network, file.kind, e.split.x_validation, e.split.y_validation);
  Json payload = header("evaluate", e);
  payload["model"] = to_string(file.kind);
  payload["metrics"] = {{"validation_loss", m.validation_loss},
                        {"validation_r2", m.validation_r2},
                        {"validation_rmse", m.validation_rmse}};
  write_report(fs::path(o.out) / "evaluate_report.json", payload, default_meta());
  std::cout << "validation R2 " << m.validation_r2 << "  RMSE " << m.validation_rmse << "\n";
  return 0;
}

int cmd_relevance(const CommonOptions& o, const std::string& params_path,
                  const std::string& method_name) {
  const RelevanceMethod method = relevance_method_from_string(method_name);
  const Experiment e = load_experiment(o);
  const ParamsFile file = load_matching_params(params_path, e);
  const RelevanceVector r = mean_relevance(method, file.params, e.network, e.split.x_validation);
  std::vector<std::size_t> order(static_cast<std::size_t>(r.scores.size()));
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return r.scores[static_cast<Eigen::Index>(a)] > r.scores[static_cast<Eigen::Index>(b)];
  });
  Json features = Json::array();
  for (std::size_t j : order) {
    features.push_back({{"name", e.split.feature_names()[j]},
                        {"index", j},
                        {"score", r.scores[static_cast<Eigen::Index>(j)]}});
  }
  Json payload = header("relevance", e);
  payload["model"] = to_string(file.kind);
  payload["method"] = to_string(method);
  payload["samples"] = e.split.x_validation.rows();
  payload["features"] = std::move(features);
  const fs::path out = o.out;
  write_report(out / ("relevance_" + to_string(method) + ".json"), payload, default_meta());
  write_text_atomic(out / ("relevance_" + to_string(method) + ".svg"),
                    render_svg(relevance_chart(payload)));
  for (const auto& f : payload["features"]) {
    std::cout << f["name"].get<std::string>() << "\t" << f["score"].get<double>() << "\n";
  }
  return 0;
}

double masked_r2(const ParamsFile& file, const Experiment& e, const std::vector<std::size_t>& masked,
                 const Eigen::VectorXd& medians) {
  Eigen::MatrixXd x = e.split.x_validation;
  for (std::size_t j : masked) x.col(static_cast<Eigen::Index>(j)).setConstant(medians[static_cast<Eigen::Index>(j)]);
  return r_squared(predict_mean(file.params, e.network, file.kind, x), e.split.y_validation);
}

int cmd_mask_sweep(const CommonOptions& o, const std::string& params_path,
                   const std::string& ranking_path) {
  const Experiment e = load_experiment(o);
  const ParamsFile file = load_matching_params(params_path, e);
  const Json ranking = read_json(ranking_path).at("payload");
  if (ranking.at("config_hash").get<std::string>() != config_hash(file.config) ||
      ranking.at("experiment_hash").get<std::string>() != e.config.hash()) {
    throw UsageError(ranking_path + " was computed for a different configuration (config hash " +
                     ranking.at("config_hash").get<std::string>() + ", parameters have " +
                     config_hash(file.config) + ")");
  }
  // The ranking lists features by descending relevance.
  std::vector<std::size_t> descending;
  for (const auto& f : ranking.at("features")) descending.push_back(f.at("index").get<std::size_t>());
  const auto d = static_cast<std::size_t>(e.network.input_dim());
  if (descending.size() != d) throw UsageError(ranking_path + ": feature count does not match the model");
  std::vector<std::size_t> ascending(descending.rbegin(), descending.rend());

  const Eigen::VectorXd medians = e.split.stats.standardized_median();
  Json curves = Json::array();
  for (const auto& [name, order] : {std::pair{"ascending", ascending}, std::pair{"descending", descending}}) {
    std::vector<int> counts;
    std::vector<double> r2;
    std::vector<std::string> names;
    for (std::size_t m = 0; m <= d; ++m) {
      const std::vector<std::size_t> prefix(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(m));
      counts.push_back(static_cast<int>(m));
      r2.push_back(masked_r2(file, e, prefix, medians));
      if (m < d) names.push_back(e.split.feature_names()[order[m]]);
    }
    // Abscissa m / d so curves from datasets of different width compare.
    std::vector<double> xs;
    for (int m : counts) xs.push_back(static_cast<double>(m) / static_cast<double>(d));
    curves.push_back({{"order", name},
                      {"features", names},
                      {"masked_count", counts},
                      {"r2", r2},
                      {"auc", trapezoid_auc(xs, r2)}});
  }
  Json payload = header("mask-sweep", e);
  payload["method"] = ranking.at("method");
  payload["model"] = to_string(file.kind);
  payload["unmasked_r2"] = curves[0]["r2"][0];
  payload["curves"] = std::move(curves);
  const std::string method = payload["method"].get<std::string>();
  const fs::path out = o.out;
  write_report(out / ("mask_sweep_" + method + ".json"), payload, default_meta());
  write_text_atomic(out / ("mask_sweep_" + method + ".svg"), render_svg(mask_sweep_chart(payload)));
  std::cout << "AUC ascending " << payload["curves"][0]["auc"].get<double>() << "  descending "
            << payload["curves"][1]["auc"].get<double>() << "\n";
  return 0;
}

int cmd_gap(const CommonOptions& o, const std::string& params_path, const std::string& samples,
            const std::string& factors_text) {
  const Experiment e = load_experiment(o);
  const ParamsFile file = load_matching_params(params_path, e);
  if (file.kind != ModelKind::Probabilistic) throw UsageError("gap scores need a probabilistic (lpn) model");
  const std::vector<std::size_t> ids = parse_ids(samples);
  const std::vector<double> factors = factors_text.empty() ? e.config.gap_factors : parse_factors(factors_text);
  const auto n = static_cast<std::size_t>(e.split.x_validation.rows());
  for (std::size_t id : ids) {
    if (id >= n) {
      throw UsageError("unknown sample id " + std::to_string(id) + " (validation split has " +
                       std::to_string(n) + " rows)");
    }
  }
  Json entries = Json::array();
  for (std::size_t id : ids) {
    const Eigen::VectorXd x = e.split.x_validation.row(static_cast<Eigen::Index>(id)).transpose();
    const GapProfile profile =
        gap_scores(file.params, e.network, x, e.network.input_variance, factors, e.config.gap);
    if (!profile.all_converged()) {
      std::cerr << "warning: sample " << id << " did not reach the variance tolerance for every t\n";
    }
    entries.push_back({{"sample_id", id}, {"profile", to_json(profile, e.split.feature_names())}});
  }
  Json payload = header("gap", e);
  payload["factors"] = factors;
  payload["calibration"] = e.config.gap;
  payload["samples"] = entries;
  const fs::path out = o.out;
  write_report(out / "gap_report.json", payload, default_meta());
  for (const auto& s : payload["samples"]) {
    write_text_atomic(out / ("gap_sample_" + std::to_string(s["sample_id"].get<std::size_t>()) + ".svg"),
                      render_svg(gap_chart(s)));
  }
  return 0;
}

int cmd_selfcheck(const CommonOptions& o, const std::string& fault_name, bool write) {
  const Fault fault = fault_name.empty() ? Fault::None : fault_from_string(fault_name);
  const SelfcheckReport report = run_selfcheck(fault, o.seed.value_or(0));
  for (const auto& c : report.checks) {
    // through std::cout so in-process callers can redirect it
    char line[160];
    std::snprintf(line, sizeof line, "%-26s %s  observed %.3g  tolerance %.3g\n", c.name.c_str(),
                  c.passed ? "PASS" : "FAIL", c.observed, c.tolerance);
    std::cout << line;
  }
  if (write) write_report(fs::path(o.out) / "selfcheck_report.json", to_json(report), default_meta());
  if (!report.passed()) {
    std::string names;
    for (const auto& f : report.failures()) names += (names.empty() ? "" : ", ") + f;
    std::cerr << "selfcheck failed: " << names << "\n";
    return 1;
  }
  std::cout << "selfcheck passed\n";
  return 0;
}

int cmd_prep(const CommonOptions& o) {
  const Experiment e = load_experiment(o);
  const Standardizer& s = e.split.stats;
  Json stats = Json::array();
  for (std::size_t j = 0; j < s.feature_names().size(); ++j) {
    const auto i = static_cast<Eigen::Index>(j);
    stats.push_back({{"name", s.feature_names()[j]},
                     {"mean", s.mean()[i]},
                     {"stddev", s.stddev()[i]},
                     {"median", s.median()[i]}});
  }
  Json payload = header("prep", e);
  payload["dataset"] = dataset_summary(e);
  payload["raw_features"] = e.data.feature_names;
  payload["warnings"] = s.warnings();
  payload["ingestion_warnings"] = e.data.warnings;
  payload["feature_stats"] = std::move(stats);
  payload["target"] = {{"name", e.data.target_name},
                       {"mean", s.target_mean()},
                       {"stddev", s.target_stddev()}};
  write_report(fs::path(o.out) / "prep_report.json", payload, default_meta());
  std::cout << e.data.size() << " rows, " << e.split.x_train.cols() << " features retained, "
            << e.data.rejected_rows << " rejected\n";
  return 0;
}

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "experiment config (INI)");
  cmd->add_option("--seed", o.seed, "overrides every seed in the config");
  cmd->add_option("--out", o.out, "output directory")->capture_default_str();
  cmd->add_option("--dataset", o.dataset, "parkinsons, energy or synthetic:<kind>");
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Uncertainty-propagating regression networks: training, attribution, gap scores"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(LPN_VERSION));

  CommonOptions o;
  bool cv = false;
  bool quiet = false;
  std::string params;
  std::string method = "lpn";
  std::string ranking;
  std::string samples = "0";
  std::string factors;
  std::string fault;
  bool write_selfcheck = false;

  auto* train = app.add_subcommand("train", "train a model and write params.json + train_report.json");
  add_common(train, o);
  train->add_flag("--cv", cv, "k-fold cross validation instead of a single split");
  train->add_flag("--quiet", quiet, "no per-epoch progress");

  auto* eval = app.add_subcommand("evaluate", "validation metrics of trained parameters");
  add_common(eval, o);
  eval->add_option("--params", params, "trained parameters (default <out>/params.json)");

  auto* rel = app.add_subcommand("relevance", "feature ranking over the validation split");
  add_common(rel, o);
  rel->add_option("--params", params, "trained parameters (default <out>/params.json)");
  rel->add_option("--method", method, "lpn, gs or std")->capture_default_str();

  auto* sweep = app.add_subcommand("mask-sweep", "validation R2 while masking features by rank");
  add_common(sweep, o);
  sweep->add_option("--params", params, "trained parameters (default <out>/params.json)");
  sweep->add_option("--ranking", ranking, "relevance report")->required();

  auto* gap = app.add_subcommand("gap", "uncertainty gap scores for validation samples");
  add_common(gap, o);
  gap->add_option("--params", params, "trained parameters (default <out>/params.json)");
  gap->add_option("--samples", samples, "comma-separated validation row ids")->capture_default_str();
  gap->add_option("--t", factors, "comma-separated variance factors (default from config)");

  auto* check = app.add_subcommand("selfcheck", "numerical release gate");
  add_common(check, o);
  check->add_option("--inject-fault", fault,
                    "relu-variance-sign, dense-variance-unsquared or leaky-cross-term-dropped");
  check->add_flag("--report", write_selfcheck, "also write selfcheck_report.json to --out");

  auto* prep = app.add_subcommand("prep", "ingest, split and standardize; write prep_report.json");
  add_common(prep, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  tune_allocator();
  if (params.empty()) params = (fs::path(o.out) / "params.json").string();
  try {
    if (*train) return cmd_train(o, cv, quiet);
    if (*eval) return cmd_evaluate(o, params);
    if (*rel) return cmd_relevance(o, params, method);
    if (*sweep) return cmd_mask_sweep(o, params, ranking);
    if (*gap) return cmd_gap(o, params, samples, factors);
    if (*check) return cmd_selfcheck(o, fault, write_selfcheck);
    if (*prep) return cmd_prep(o);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace lpn
