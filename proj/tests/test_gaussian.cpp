#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "lpn/errors.hpp"
#include "lpn/gaussian.hpp"

using namespace lpn;

namespace {

// Composite Simpson rule for the normal density on [a, b].
double density_integral(double a, double b, int panels = 20000) {
  const double h = (b - a) / panels;
  auto f = [](double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); };
  double s = f(a) + f(b);
  for (int i = 1; i < panels; ++i) s += (i % 2 == 1 ? 4.0 : 2.0) * f(a + i * h);
  return s * h / 3.0;
}

GaussianTensor single(double mean, double var) {
  return GaussianTensor(Eigen::VectorXd::Constant(1, mean), Eigen::VectorXd::Constant(1, var));
}

struct SampleMoments {
  double mean;
  double var;
  double mean_se;
};

SampleMoments moments_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  const double m = s / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  const double var = ss / static_cast<double>(v.size() - 1);
  return {m, var, std::sqrt(var / static_cast<double>(v.size()))};
}

double leaky(double z, double c) { return z > 0.0 ? z : c * z; }

}  // namespace

TEST(NormalDensity, KnownValues) {
  const double peak = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  EXPECT_NEAR(std_normal_pdf(0.0), peak, 1e-15);
  EXPECT_NEAR(std_normal_pdf(0.0), 0.3989422804, 1e-10);
  EXPECT_NEAR(std_normal_pdf(1.0), 0.2419707245, 1e-10);
  for (double x : {0.3, 1.7, 4.2}) EXPECT_EQ(std_normal_pdf(x), std_normal_pdf(-x));
}

TEST(NormalDensity, BoundedAbove) {
  for (double x = -9.0; x <= 9.0; x += 0.25) {
    EXPECT_GT(std_normal_pdf(x), 0.0);
    EXPECT_LE(std_normal_pdf(x), 0.3989422804014327 + 1e-16);
  }
}

TEST(NormalCdf, MatchesIntegratedDensity) {
  EXPECT_EQ(std_normal_cdf(0.0), 0.5);
  EXPECT_GE(std_normal_cdf(8.0), 1.0 - 1e-14);
  const double oracle = 0.5 + density_integral(0.0, 1.0);
  EXPECT_NEAR(oracle, 0.8413447461, 1e-10);
  EXPECT_NEAR(std_normal_cdf(1.0), oracle, 1e-12);
  for (double x : {-3.0, -0.5, 0.7, 2.5}) {
    EXPECT_NEAR(std_normal_cdf(x), 0.5 + (x > 0 ? 1.0 : -1.0) * density_integral(0.0, std::abs(x)), 1e-12);
  }
}

TEST(NormalCdf, MonotoneInUnitInterval) {
  double prev = 0.0;
  for (double x = -8.0; x <= 8.0; x += 0.01) {
    const double v = std_normal_cdf(x);
    EXPECT_GE(v, prev);
    EXPECT_GT(v, 0.0);
    EXPECT_LE(v, 1.0);
    prev = v;
  }
}

TEST(DenseFilter, IdentityWeights) {
  const GaussianTensor g(Eigen::Vector3d(1.0, -2.0, 0.5), Eigen::Vector3d(0.1, 0.0, 2.0));
  const GaussianTensor out = filter_dense(g, Eigen::Matrix3d::Identity(), Eigen::Vector3d::Zero());
  EXPECT_EQ(out.means(), g.means());
  EXPECT_EQ(out.variances(), g.variances());
}

TEST(DenseFilter, HandEvaluatedExample) {
  Eigen::MatrixXd w(1, 2);
  w << 1.0, 2.0;
  const GaussianTensor g(Eigen::Vector2d(1.0, -1.0), Eigen::Vector2d(0.1, 0.2));
  const GaussianTensor out = filter_dense(g, w, Eigen::VectorXd::Constant(1, 1.0));
  EXPECT_NEAR(out.means()[0], 0.0, 1e-15);
  EXPECT_NEAR(out.variances()[0], 0.9, 1e-15);

  // Monte-Carlo cross-check of the same example.
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  std::vector<double> ys(1'000'000);
  for (auto& y : ys) y = 1.0 + (1.0 + std::sqrt(0.1) * n(rng)) + 2.0 * (-1.0 + std::sqrt(0.2) * n(rng));
  const SampleMoments m = moments_of(ys);
  EXPECT_LT(std::abs(m.mean - 0.0), 3.0 * m.mean_se);
  EXPECT_NEAR(m.var / 0.9, 1.0, 0.01);
}

TEST(DenseFilter, DeterministicInputStaysDeterministic) {
  const GaussianTensor g(Eigen::Vector2d(0.3, -4.0), Eigen::Vector2d::Zero());
  const Eigen::MatrixXd w = (Eigen::MatrixXd(3, 2) << 1, -2, 0.5, 3, -1, 1).finished();
  const GaussianTensor out = filter_dense(g, w, Eigen::Vector3d(0.1, 0.2, 0.3));
  EXPECT_TRUE((out.variances().array() == 0.0).all());
}

TEST(DenseFilter, DimensionMismatchIsConfigError) {
  const GaussianTensor g(Eigen::Vector2d(0.3, -4.0), Eigen::Vector2d::Ones());
  EXPECT_THROW(filter_dense(g, Eigen::MatrixXd::Ones(2, 3), Eigen::Vector2d::Zero()), ConfigError);
  EXPECT_THROW(filter_dense(g, Eigen::MatrixXd::Ones(2, 2), Eigen::Vector3d::Zero()), ConfigError);
}

TEST(ReluFilter, StandardNormalInput) {
  const GaussianTensor out = filter_relu(single(0.0, 1.0));
  EXPECT_NEAR(out.means()[0], 0.3989422804, 1e-10);
  EXPECT_NEAR(out.variances()[0], 0.5 - 1.0 / (2.0 * std::numbers::pi), 1e-15);
  EXPECT_NEAR(out.variances()[0], 0.3408450569, 1e-10);
}

TEST(ReluFilter, DeterministicLimits) {
  const GaussianTensor pos = filter_relu(single(10.0, 1e-4));
  EXPECT_NEAR(pos.means()[0], 10.0, 1e-9);
  EXPECT_NEAR(pos.variances()[0], 1e-4, 1e-9);
  const GaussianTensor neg = filter_relu(single(-10.0, 1e-4));
  EXPECT_NEAR(neg.means()[0], 0.0, 1e-9);
  EXPECT_NEAR(neg.variances()[0], 0.0, 1e-9);
}

TEST(ReluFilter, ZeroVarianceIsPlainRelu) {
  EXPECT_NEAR(filter_relu(single(2.5, 0.0)).means()[0], 2.5, 1e-12);
  EXPECT_NEAR(filter_relu(single(-2.5, 0.0)).means()[0], 0.0, 1e-12);
  EXPECT_GE(filter_relu(single(-2.5, 0.0)).variances()[0], 0.0);
}

TEST(ReluFilter, MeanMonotoneInInputMean) {
  for (double var : {1e-6, 0.01, 1.0, 25.0}) {
    double prev = -1.0;
    for (double mu = -6.0; mu <= 6.0; mu += 0.05) {
      const double m = filter_relu(single(mu, var)).means()[0];
      EXPECT_GE(m, prev) << "mu " << mu << " var " << var;
      prev = m;
    }
  }
}

TEST(ReluFilter, MeanDerivativeIsCdf) {
  const double h = 1e-5;
  for (double mu : {-1.5, -0.2, 0.0, 0.8, 2.0}) {
    for (double var : {0.1, 1.0, 3.0}) {
      const double fd =
          (filter_relu(single(mu + h, var)).means()[0] - filter_relu(single(mu - h, var)).means()[0]) / (2 * h);
      EXPECT_NEAR(fd, std_normal_cdf(mu / std::sqrt(var)), 1e-8);
    }
  }
}

TEST(LeakyReluFilter, ZeroSlopeIsRelu) {
  for (double mu : {-2.0, 0.0, 0.7}) {
    const GaussianTensor a = filter_leaky_relu(single(mu, 0.6), 0.0);
    const GaussianTensor b = filter_relu(single(mu, 0.6));
    EXPECT_EQ(a.means()[0], b.means()[0]);
    EXPECT_NEAR(a.variances()[0], b.variances()[0], 1e-15);
  }
}

TEST(LeakyReluFilter, StandardNormalInput) {
  // Exact for z ~ N(0, 1): E[y] = (1 - c)/sqrt(2 pi), E[y^2] = (1 + c^2)/2.
  const double c = 0.01;
  const double mean = (1.0 - c) / std::sqrt(2.0 * std::numbers::pi);
  const double var = 0.5 * (1.0 + c * c) - mean * mean;
  EXPECT_NEAR(mean, 0.3949528576, 1e-10);
  EXPECT_NEAR(var, 0.3440622403, 1e-10);
  const GaussianTensor out = filter_leaky_relu(single(0.0, 1.0), c);
  EXPECT_NEAR(out.means()[0], mean, 1e-12);
  EXPECT_NEAR(out.variances()[0], var, 1e-12);

  std::mt19937_64 rng(11);
  std::normal_distribution<double> n;
  std::vector<double> ys(1'000'000);
  for (auto& y : ys) y = leaky(n(rng), c);
  const SampleMoments m = moments_of(ys);
  EXPECT_LT(std::abs(m.mean - out.means()[0]), 3.0 * m.mean_se);
  EXPECT_NEAR(m.var / out.variances()[0], 1.0, 0.05);
}

TEST(LeakyReluFilter, PositiveDeterministicLimit) {
  const GaussianTensor out = filter_leaky_relu(single(10.0, 1e-4), 0.01);
  EXPECT_NEAR(out.means()[0], 10.0, 1e-9);
  EXPECT_NEAR(out.variances()[0], 1e-4, 1e-9);
}

TEST(LeakyReluFilter, UnitSlopeMeanIsIdentity) {
  for (double mu : {-1.7, -0.1, 0.0, 0.4, 3.0}) {
    const GaussianTensor out = filter_leaky_relu_unchecked(single(mu, 0.8), 1.0);
    EXPECT_NEAR(out.means()[0], mu, 1e-12);
    EXPECT_NEAR(out.variances()[0], 0.8, 1e-12);
  }
}

TEST(LeakyReluFilter, SlopeOutsideRangeIsConfigError) {
  EXPECT_THROW(filter_leaky_relu(single(0.0, 1.0), 1.0), ConfigError);
  EXPECT_THROW(filter_leaky_relu(single(0.0, 1.0), -0.1), ConfigError);
}

TEST(DropoutFilter, ZeroRateIsIdentity) {
  const GaussianTensor g(Eigen::Vector3d(1, 2, 3), Eigen::Vector3d(0.1, 0.2, 0.3));
  std::mt19937_64 rng(1);
  const GaussianTensor out = filter_dropout(g, 0.0, rng, true);
  EXPECT_EQ(out.means(), g.means());
  EXPECT_EQ(out.variances(), g.variances());
}

TEST(DropoutFilter, EvaluationModeIsIdentity) {
  const GaussianTensor g(Eigen::Vector3d(1, 2, 3), Eigen::Vector3d(0.1, 0.2, 0.3));
  std::mt19937_64 rng(1);
  const GaussianTensor out = filter_dropout(g, 0.3, rng, false);
  EXPECT_EQ(out.means(), g.means());
}

TEST(DropoutFilter, ExplicitMasks) {
  const GaussianTensor g(Eigen::Vector3d(1, 2, 3), Eigen::Vector3d(0.1, 0.2, 0.3));
  const std::vector<std::uint8_t> none = {0, 0, 0};
  const GaussianTensor dropped = filter_dropout(g, 0.3, none, true);
  EXPECT_TRUE((dropped.means().array() == 0.0).all());
  EXPECT_TRUE((dropped.variances().array() == 0.0).all());

  const std::vector<std::uint8_t> some = {1, 0, 1};
  const GaussianTensor out = filter_dropout(g, 0.5, some, true);
  EXPECT_DOUBLE_EQ(out.means()[0], 2.0);
  EXPECT_DOUBLE_EQ(out.variances()[0], 0.4);
  EXPECT_EQ(out.means()[1], 0.0);
  EXPECT_EQ(out.variances()[1], 0.0);
}

TEST(DropoutFilter, ExpectationPreservedOverMasks) {
  const GaussianTensor g(Eigen::Vector3d(1.0, -2.0, 0.25), Eigen::Vector3d::Ones());
  std::mt19937_64 rng(5);
  const int n = 100000;
  Eigen::Vector3d sum = Eigen::Vector3d::Zero();
  Eigen::Vector3d sq = Eigen::Vector3d::Zero();
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector3d m = filter_dropout(g, 0.3, rng, true).means();
    sum += m;
    sq += m.cwiseAbs2();
  }
  const Eigen::Vector3d mean = sum / n;
  const Eigen::Vector3d se = ((sq / n - mean.cwiseAbs2()) / n).cwiseSqrt();
  for (int j = 0; j < 3; ++j) EXPECT_LT(std::abs(mean[j] - g.means()[j]), 3.0 * se[j]);
}

TEST(DropoutFilter, RateOfOneIsConfigError) {
  const GaussianTensor g(Eigen::Vector2d(1, 2), Eigen::Vector2d::Ones());
  std::mt19937_64 rng(1);
  EXPECT_THROW(filter_dropout(g, 1.0, rng, true), ConfigError);
}

TEST(GaussianTensor, InvariantsEnforced) {
  EXPECT_THROW(GaussianTensor(Eigen::Vector2d(1, 2), Eigen::Vector3d::Ones()), ConfigError);
  EXPECT_THROW(GaussianTensor(Eigen::Vector2d(1, 2), Eigen::Vector2d(1, -1)), ConfigError);
  EXPECT_THROW(GaussianTensor(Eigen::Vector2d(1, NAN), Eigen::Vector2d(1, 1)), ConfigError);
}

TEST(FilterProperties, OutputsFiniteWithNonNegativeVariance) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> mu(-50.0, 50.0);
  std::uniform_real_distribution<double> logvar(-30.0, 5.0);
  std::uniform_real_distribution<double> slope(0.0, 0.99);
  std::uniform_real_distribution<double> w(-3.0, 3.0);
  for (int trial = 0; trial < 2000; ++trial) {
    Eigen::VectorXd m(4), v(4);
    for (int j = 0; j < 4; ++j) {
      m[j] = mu(rng);
      v[j] = std::pow(10.0, logvar(rng));
    }
    const GaussianTensor g(m, v);
    const Eigen::MatrixXd W = Eigen::MatrixXd::NullaryExpr(3, 4, [&] { return w(rng); });
    for (const GaussianTensor& out :
         {filter_relu(g), filter_leaky_relu(g, slope(rng)), filter_dense(g, W, Eigen::Vector3d::Ones()),
          filter_dropout(g, 0.3, rng, true)}) {
      EXPECT_TRUE(out.means().allFinite());
      EXPECT_TRUE(out.variances().allFinite());
      EXPECT_TRUE((out.variances().array() >= 0.0).all());
    }
  }
}

TEST(FilterProperties, DenseLeakyMatchesMonteCarlo) {
  // One dense + leaky block is exact per unit under a diagonal Gaussian input.
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::normal_distribution<double> n;
  const int samples = 400000;
  for (int stack = 0; stack < 4; ++stack) {
    const Eigen::Index in = 3, out = 2;
    const Eigen::MatrixXd W = Eigen::MatrixXd::NullaryExpr(out, in, [&] { return u(rng); });
    const Eigen::VectorXd b = Eigen::VectorXd::NullaryExpr(out, [&] { return u(rng); });
    const Eigen::VectorXd mu = Eigen::VectorXd::NullaryExpr(in, [&] { return 2.0 * u(rng); });
    const Eigen::VectorXd nu = Eigen::VectorXd::NullaryExpr(in, [&] { return 0.55 + 0.45 * u(rng); });
    const double c = 0.2;
    const GaussianTensor adf = filter_leaky_relu(filter_dense(GaussianTensor(mu, nu), W, b), c);
    std::vector<std::vector<double>> ys(out, std::vector<double>(samples));
    for (int s = 0; s < samples; ++s) {
      Eigen::VectorXd x(in);
      for (Eigen::Index j = 0; j < in; ++j) x[j] = mu[j] + std::sqrt(nu[j]) * n(rng);
      const Eigen::VectorXd z = W * x + b;
      for (Eigen::Index k = 0; k < out; ++k) ys[k][s] = leaky(z[k], c);
    }
    for (Eigen::Index k = 0; k < out; ++k) {
      const SampleMoments m = moments_of(ys[k]);
      EXPECT_LT(std::abs(m.mean - adf.means()[k]), 4.0 * m.mean_se);
      EXPECT_NEAR(m.var / adf.variances()[k], 1.0, 0.05);
    }
  }
}
