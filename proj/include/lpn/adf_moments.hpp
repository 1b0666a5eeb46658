#pragma once

// Closed-form moment matching for rectifiers.
//
// For z ~ N(mu, nu) and leaky(z) = relu(z) - c relu(-z), with s = sqrt(nu),
// a = mu / s, Phi/phi the standard normal cdf/pdf:
//
//   E[leaky]   = mu Phi + s phi - c (s phi - mu (1 - Phi))
//   E[leaky^2] = (mu^2 + nu) (Phi + c^2 (1 - Phi)) + (1 - c^2) mu s phi
//
// relu(z) relu(-z) = 0 pointwise, so the second moment has no cross term. The
// same kernels back the value path and the tape ops, where the derivatives
// have closed forms in terms of gauss_cdf_mix and gauss_pdf_ratio.

#include <Eigen/Dense>

namespace lpn::adf {

/// Variances below this are floored before forming mu / sqrt(nu).
inline constexpr double kVarianceFloor = 1e-12;

Eigen::ArrayXXd std_normal_pdf(const Eigen::ArrayXXd& x);
Eigen::ArrayXXd std_normal_cdf(const Eigen::ArrayXXd& x);

/// s = sqrt(max(var, floor)) and Phi, phi at mean / s.
struct GaussTerms {
  Eigen::ArrayXXd sd;
  Eigen::ArrayXXd cdf;
  Eigen::ArrayXXd pdf;
};

GaussTerms gauss_terms(const Eigen::ArrayXXd& mean, const Eigen::ArrayXXd& var);

Eigen::ArrayXXd leaky_first_moment(const Eigen::ArrayXXd& mean, const GaussTerms& t, double slope);
Eigen::ArrayXXd leaky_second_moment(const Eigen::ArrayXXd& mean, const GaussTerms& t,
                                    double slope);
/// (1 - p) Phi(mu / s) + p
Eigen::ArrayXXd gauss_cdf_mix(const GaussTerms& t, double p);
/// phi(mu / s) / s
Eigen::ArrayXXd gauss_pdf_ratio(const GaussTerms& t);

struct Moments {
  Eigen::ArrayXXd mean;
  Eigen::ArrayXXd var;
};

/// Mean and variance of leaky(z); the variance is clamped at 0.
Moments leaky_relu_moments(const Eigen::ArrayXXd& mean, const Eigen::ArrayXXd& var,
                           double slope);
inline Moments relu_moments(const Eigen::ArrayXXd& mean, const Eigen::ArrayXXd& var) {
  return leaky_relu_moments(mean, var, 0.0);
}

}  // namespace lpn::adf
