#pragma once

#include <functional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "lpn/model.hpp"

namespace lpn::test {

/// A small network with non-trivial random weights and biases.
inline Parameters random_params(const NetworkConfig& config, std::uint64_t seed, double scale = 0.8) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  Parameters p;
  for (std::size_t l = 0; l + 1 < config.widths.size(); ++l) {
    DenseLayer layer;
    layer.weight = Eigen::MatrixXd::NullaryExpr(config.widths[l + 1], config.widths[l], [&] { return u(rng); });
    layer.bias = Eigen::VectorXd::NullaryExpr(config.widths[l + 1], [&] { return u(rng); });
    p.layers.push_back(std::move(layer));
  }
  return p;
}

inline NetworkConfig small_config(std::vector<int> widths, double slope = 0.1) {
  NetworkConfig c;
  c.widths = std::move(widths);
  c.leaky_slope = slope;
  c.dropout = 0.0;
  return c;
}

inline Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed,
                                     double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  return Eigen::MatrixXd::NullaryExpr(rows, cols, [&] { return u(rng); });
}

/// Central differences of f around x.
inline Eigen::VectorXd central_difference(const std::function<double(const Eigen::VectorXd&)>& f,
                                          const Eigen::VectorXd& x, double step) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + step;
    const double up = f(probe);
    probe[i] = x[i] - step;
    const double down = f(probe);
    probe[i] = x[i];
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

inline double relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double floor = 1e-6) {
  return (a - b).norm() / std::max(b.norm(), floor);
}

}  // namespace lpn::test
