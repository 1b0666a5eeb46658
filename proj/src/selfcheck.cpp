#include "lpn/selfcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "lpn/errors.hpp"
#include "lpn/model.hpp"
#include "lpn/objectives.hpp"
#include "lpn/uq.hpp"

namespace lpn {

namespace {

// ---- Broken kernels -----------------------------------------------------------

GaussianTensor relu_with_fault(const GaussianTensor& in, bool sign_error) {
  Eigen::VectorXd mean(in.size());
  Eigen::VectorXd var(in.size());
  for (Eigen::Index i = 0; i < in.size(); ++i) {
    const double mu = in.means()[i];
    const double nu = std::max(in.variances()[i], adf::kVarianceFloor);
    const double s = std::sqrt(nu);
    const double cdf = std_normal_cdf(mu / s);
    const double pdf = std_normal_pdf(mu / s);
    mean[i] = mu * cdf + s * pdf;
    const double second = (mu * mu + nu) * cdf + mu * s * pdf;
    var[i] = sign_error ? second + mean[i] * mean[i] : std::max(second - mean[i] * mean[i], 0.0);
  }
  return GaussianTensor(std::move(mean), std::move(var));
}

GaussianTensor leaky_from_relu(const GaussianTensor& in, double slope, bool sign_error,
                               bool cross_term) {
  const GaussianTensor pos = relu_with_fault(in, sign_error);
  const GaussianTensor neg = relu_with_fault(GaussianTensor(-in.means(), in.variances()), sign_error);
  Eigen::VectorXd mean = pos.means() - slope * neg.means();
  Eigen::VectorXd var = pos.variances() + slope * slope * neg.variances();
  if (cross_term) var += 2.0 * slope * pos.means().cwiseProduct(neg.means());
  return GaussianTensor(std::move(mean), var.cwiseMax(0.0));
}

GaussianTensor dense_unsquared(const GaussianTensor& in, const Eigen::MatrixXd& w,
                               const Eigen::VectorXd& b) {
  return GaussianTensor(w * in.means() + b, w.cwiseAbs() * in.variances());
}

// ---- Helpers ------------------------------------------------------------------

double relative_error(const Eigen::VectorXd& got, const Eigen::VectorXd& want) {
  return (got - want).norm() / std::max(want.norm(), 1e-12);
}

Eigen::VectorXd central_difference(const std::function<double(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& at, double step) {
  Eigen::VectorXd grad(at.size());
  Eigen::VectorXd probe = at;
  for (Eigen::Index i = 0; i < at.size(); ++i) {
    probe[i] = at[i] + step;
    const double up = f(probe);
    probe[i] = at[i] - step;
    const double down = f(probe);
    probe[i] = at[i];
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

NetworkConfig small_network(std::mt19937_64& rng, int max_width) {
  std::uniform_int_distribution<int> width(1, max_width);
  std::uniform_int_distribution<int> depth(1, 2);
  NetworkConfig c;
  c.widths.push_back(width(rng));
  for (int i = depth(rng); i > 0; --i) c.widths.push_back(width(rng));
  c.widths.push_back(1);
  c.dropout = 0.0;
  c.seed = rng();
  return c;
}

Eigen::MatrixXd uniform_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols,
                               double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

// ---- Checks -------------------------------------------------------------------

void monte_carlo_filters(const FilterKernels& k, std::uint64_t seed, std::vector<CheckResult>& out) {
  constexpr int kStacks = 40;
  constexpr int kSamples = 200000;
  constexpr int kBlock = 4096;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> width(1, 8);
  std::uniform_real_distribution<double> slope_dist(0.01, 0.5);
  std::normal_distribution<double> normal;

  double worst_se = 0.0;
  double worst_rel = 0.0;
  for (int s = 0; s < kStacks; ++s) {
    const int din = width(rng);
    const int dout = width(rng);
    const Eigen::MatrixXd w = uniform_matrix(rng, dout, din, -1.0, 1.0);
    const Eigen::VectorXd b = uniform_matrix(rng, dout, 1, -1.0, 1.0);
    const Eigen::VectorXd mu = uniform_matrix(rng, din, 1, -2.0, 2.0);
    const Eigen::VectorXd nu = uniform_matrix(rng, din, 1, 0.05, 1.0);
    const double slope = slope_dist(rng);

    const GaussianTensor adf = k.leaky_relu(k.dense(GaussianTensor(mu, nu), w, b), slope);

    // Accumulate around the ADF mean for numerical stability.
    Eigen::ArrayXd sum = Eigen::ArrayXd::Zero(dout);
    Eigen::ArrayXd sum_sq = Eigen::ArrayXd::Zero(dout);
    Eigen::MatrixXd z(din, kBlock);
    for (int done = 0; done < kSamples; done += kBlock) {
      const int n = std::min(kBlock, kSamples - done);
      for (int j = 0; j < n; ++j) {
        for (int i = 0; i < din; ++i) z(i, j) = mu[i] + std::sqrt(nu[i]) * normal(rng);
      }
      Eigen::ArrayXXd pre = ((w * z.leftCols(n)).colwise() + b).array();
      const Eigen::ArrayXXd post = (pre > 0.0).select(pre, slope * pre);
      const Eigen::ArrayXXd centered = post.colwise() - adf.means().array();
      sum += centered.rowwise().sum();
      sum_sq += centered.square().rowwise().sum();
    }
    const Eigen::ArrayXd offset = sum / kSamples;
    const Eigen::ArrayXd mc_var = (sum_sq / kSamples - offset.square()) * kSamples / (kSamples - 1.0);
    const Eigen::ArrayXd se = (mc_var / kSamples).sqrt();
    worst_se = std::max(worst_se, (offset.abs() / se.max(1e-300)).maxCoeff());
    worst_rel = std::max(worst_rel, ((adf.variances().array() - mc_var).abs() / mc_var).maxCoeff());
  }
  std::ostringstream d;
  d << kStacks << " dense+leaky stacks, " << kSamples << " samples each";
  out.push_back({"mc-filter-mean", d.str() + "; worst |mean error| in standard errors", worst_se,
                 4.0, worst_se < 4.0});
  out.push_back({"mc-filter-variance", d.str() + "; worst relative variance error", worst_rel, 0.05,
                 worst_rel < 0.05});
}

void closed_form_fixtures(const FilterKernels& k, std::vector<CheckResult>& out) {
  const GaussianTensor unit(Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1));
  auto error = [](const GaussianTensor& g, double mean, double var) {
    return std::max(std::abs(g.means()[0] - mean), std::abs(g.variances()[0] - var));
  };
  // For z ~ N(0, 1): E[relu] = 1/sqrt(2 pi), E[relu^2] = 1/2; the leaky
  // version has E = (1 - c)/sqrt(2 pi) and E[y^2] = (1 + c^2)/2.
  const double inv2pi = 0.5 * std::numbers::inv_pi;
  const double relu = error(k.relu(unit), std::sqrt(inv2pi), 0.5 - inv2pi);
  out.push_back({"fixture-relu", "relu of N(0, 1), max abs error", relu, 1e-9, relu < 1e-9});
  const double c = 0.01;
  const double leaky = error(k.leaky_relu(unit, c), (1.0 - c) * std::sqrt(inv2pi),
                             0.5 * (1.0 + c * c) - (1.0 - c) * (1.0 - c) * inv2pi);
  out.push_back({"fixture-leaky-relu", "leaky relu (c = 0.01) of N(0, 1), max abs error", leaky,
                 1e-9, leaky < 1e-9});

  Eigen::MatrixXd w(2, 2);
  w << 1.0, -2.0, 0.5, 3.0;
  const GaussianTensor dense =
      k.dense(GaussianTensor(Eigen::Vector2d(1.0, 2.0), Eigen::Vector2d(0.5, 0.25)), w,
              Eigen::Vector2d(0.1, -0.2));
  const double dense_error = std::max((dense.means() - Eigen::Vector2d(-2.9, 6.3)).cwiseAbs().maxCoeff(),
                                      (dense.variances() - Eigen::Vector2d(1.5, 2.375)).cwiseAbs().maxCoeff());
  out.push_back({"fixture-dense", "2x2 dense layer, max abs error", dense_error, 1e-12,
                 dense_error < 1e-12});
}

void gradient_checks(std::uint64_t seed, std::vector<CheckResult>& out) {
  std::mt19937_64 rng(seed + 1);
  double worst = 0.0;
  for (int n = 0; n < 5; ++n) {
    NetworkConfig c = small_network(rng, 5);
    c.penalty_weight = 0.0;
    Parameters p = init_params(c);
    const Eigen::MatrixXd x = uniform_matrix(rng, 8, c.input_dim(), -1.5, 1.5);
    const Eigen::VectorXd y = uniform_matrix(rng, 8, 1, -1.0, 1.0);
    const Eigen::VectorXd analytic = regularized_loss_gradient(p, c, x, y);
    const Eigen::VectorXd fd = central_difference(
        [&](const Eigen::VectorXd& flat) {
          Parameters q = p;
          q.assign(flat);
          return regularized_loss(q, c, x, y);
        },
        p.flatten(), 1e-4);
    worst = std::max(worst, relative_error(analytic, fd));
  }
  out.push_back({"gradient-fd", "nll gradient vs central differences on 5 networks, relative error",
                 worst, 1e-4, worst < 1e-4});

  // d E[relu] / d mu = Phi(mu / sqrt(nu)) on a grid.
  double identity = 0.0;
  for (int i = 0; i < 10; ++i) {
    for (int j = 0; j < 10; ++j) {
      const double mu = -2.0 + 4.0 * i / 9.0;
      const double nu = 0.05 + 0.95 * j / 9.0;
      ad::Tape tape;
      const ad::Var m = tape.variable(ad::Tensor::Constant(1, 1, mu));
      const ad::Var v = tape.constant(ad::Tensor::Constant(1, 1, nu));
      const ad::Var inputs[] = {m};
      const double g = ad::gradient(ad::leaky_first_moment(m, v, 0.0), inputs)[0](0, 0);
      identity = std::max(identity, std::abs(g - std_normal_cdf(mu / std::sqrt(nu))));
    }
  }
  out.push_back({"relu-mean-derivative", "d mean / d mu vs Phi(mu / s) on a 10x10 grid, max abs error",
                 identity, 1e-8, identity < 1e-8});
}

void second_order_checks(std::uint64_t seed, std::vector<CheckResult>& out) {
  std::mt19937_64 rng(seed + 2);
  double worst = 0.0;
  for (int n = 0; n < 5; ++n) {
    NetworkConfig c = small_network(rng, 6);
    c.widths.front() = std::max(2, c.widths.front());
    const Parameters p = init_params(c);
    const Eigen::MatrixXd x = uniform_matrix(rng, 4, c.input_dim(), 0.2, 1.5);
    const Eigen::VectorXd analytic = mean_relevance_entropy_gradient(p, c, x);
    const Eigen::VectorXd fd = central_difference(
        [&](const Eigen::VectorXd& flat) {
          Parameters q = p;
          q.assign(flat);
          return mean_relevance_entropy(q, c, x);
        },
        p.flatten(), 1e-5);
    worst = std::max(worst, relative_error(analytic, fd));
  }
  out.push_back({"second-order-fd",
                 "entropy penalty gradient vs central differences on 5 networks, relative error",
                 worst, 1e-3, worst < 1e-3});
}

Parameters linear_model(const std::vector<double>& weights) {
  Parameters p;
  DenseLayer layer;
  layer.weight = Eigen::Map<const Eigen::RowVectorXd>(weights.data(), static_cast<Eigen::Index>(weights.size()));
  layer.bias = Eigen::VectorXd::Zero(1);
  p.layers.push_back(layer);
  return p;
}

NetworkConfig linear_config(int d) {
  NetworkConfig c;
  c.widths = {d, 1};
  c.dropout = 0.0;
  return c;
}

void calibration_checks(std::vector<CheckResult>& out) {
  const double delta = 0.01;
  {
    const NetworkConfig c = linear_config(1);
    const Parameters p = linear_model({3.0});
    const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 0.7);
    const CalibrationResult r = calibrate_sigma(p, c, x, delta, 2.0);
    const double sigma_error = std::abs(r.sigma[0] / (2.0 * delta) - 1.0);
    const double beta_error = std::abs(r.variance / (2.0 * 9.0 * delta) - 1.0);
    out.push_back({"calibration-sigma", "y = 3x, t = 2: relative error of sigma against 2 delta",
                   sigma_error, 0.05, sigma_error < 0.05});
    out.push_back({"calibration-variance", "y = 3x, t = 2: relative error of beta against 2 beta*",
                   beta_error, 0.01, beta_error < 0.01});
  }
  {
    const NetworkConfig c = linear_config(2);
    const Parameters p = linear_model({3.0, 0.0});
    const GapProfile g = gap_scores(p, c, Eigen::Vector2d(0.5, -0.8), delta);
    double drift = 0.0;
    for (Eigen::Index i = 0; i < g.sigma.rows(); ++i) drift = std::max(drift, std::abs(g.sigma(i, 1) - delta));
    out.push_back({"calibration-dead-feature", "y = 3 x1 + 0 x2: max |sigma_2 - delta|", drift, 0.0,
                   drift == 0.0});
    const double margin = g.gap[0] - g.gap[1];
    out.push_back({"gap-ordering", "y = 3 x1 + 0 x2: gap(x1) - gap(x2), must be positive", margin,
                   0.0, margin > 0.0});
  }
}

}  // namespace

std::string to_string(Fault fault) {
  switch (fault) {
    case Fault::None: return "none";
    case Fault::ReluVarianceSign: return "relu-variance-sign";
    case Fault::DenseVarianceUnsquared: return "dense-variance-unsquared";
    case Fault::LeakyCrossTermDropped: return "leaky-cross-term-dropped";
  }
  return "none";
}

Fault fault_from_string(const std::string& name) {
  for (Fault f : {Fault::None, Fault::ReluVarianceSign, Fault::DenseVarianceUnsquared,
                  Fault::LeakyCrossTermDropped}) {
    if (to_string(f) == name) return f;
  }
  throw UsageError("unknown fault '" + name +
                   "' (expected relu-variance-sign, dense-variance-unsquared or leaky-cross-term-dropped)");
}

const std::vector<Fault>& all_faults() {
  static const std::vector<Fault> faults = {Fault::ReluVarianceSign, Fault::DenseVarianceUnsquared,
                                            Fault::LeakyCrossTermDropped};
  return faults;
}

FilterKernels kernels_for(Fault fault) {
  FilterKernels k{
      [](const GaussianTensor& in, const Eigen::MatrixXd& w, const Eigen::VectorXd& b) {
        return filter_dense(in, w, b);
      },
      [](const GaussianTensor& in) { return filter_relu(in); },
      [](const GaussianTensor& in, double c) { return filter_leaky_relu(in, c); }};
  switch (fault) {
    case Fault::None:
      break;
    case Fault::ReluVarianceSign:
      k.relu = [](const GaussianTensor& in) { return relu_with_fault(in, true); };
      k.leaky_relu = [](const GaussianTensor& in, double c) { return leaky_from_relu(in, c, true, true); };
      break;
    case Fault::DenseVarianceUnsquared:
      k.dense = dense_unsquared;
      break;
    case Fault::LeakyCrossTermDropped:
      k.leaky_relu = [](const GaussianTensor& in, double c) { return leaky_from_relu(in, c, false, false); };
      break;
  }
  return k;
}

bool SelfcheckReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

std::vector<std::string> SelfcheckReport::failures() const {
  std::vector<std::string> names;
  for (const auto& c : checks) {
    if (!c.passed) names.push_back(c.name);
  }
  return names;
}

SelfcheckReport run_selfcheck(Fault fault, std::uint64_t seed) {
  SelfcheckReport report;
  report.fault = fault;
  const FilterKernels kernels = kernels_for(fault);
  monte_carlo_filters(kernels, seed, report.checks);
  closed_form_fixtures(kernels, report.checks);
  gradient_checks(seed, report.checks);
  second_order_checks(seed, report.checks);
  calibration_checks(report.checks);
  return report;
}

nlohmann::json to_json(const SelfcheckReport& report) {
  nlohmann::json checks = nlohmann::json::array();
  for (const auto& c : report.checks) {
    checks.push_back({{"name", c.name},
                      {"detail", c.detail},
                      {"observed", c.observed},
                      {"tolerance", c.tolerance},
                      {"passed", c.passed}});
  }
  return {{"fault", to_string(report.fault)},
          {"passed", report.passed()},
          {"failures", report.failures()},
          {"checks", std::move(checks)}};
}

}  // namespace lpn
