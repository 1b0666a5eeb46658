#pragma once

// Release gate: Monte-Carlo filter oracles, closed-form fixtures, first- and
// second-order finite-difference checks, and analytic calibration oracles.
//
// Faults can be injected to confirm the gate actually bites. Each fault swaps
// in a deliberately broken filter kernel for the checks that exercise
// filters; the production kernels are never modified.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lpn/gaussian.hpp"

namespace lpn {

enum class Fault {
  None,
  /// relu variance computed as E[r^2] + E[r]^2.
  ReluVarianceSign,
  /// dense variance propagated with |W| instead of W*W.
  DenseVarianceUnsquared,
  /// leaky relu variance assembled without the 2c E[r+] E[r-] term.
  LeakyCrossTermDropped,
};

std::string to_string(Fault fault);
/// Accepts none, relu-variance-sign, dense-variance-unsquared,
/// leaky-cross-term-dropped.
Fault fault_from_string(const std::string& name);
const std::vector<Fault>& all_faults();

/// The filters a check runs through.
struct FilterKernels {
  std::function<GaussianTensor(const GaussianTensor&, const Eigen::MatrixXd&, const Eigen::VectorXd&)>
      dense;
  std::function<GaussianTensor(const GaussianTensor&)> relu;
  std::function<GaussianTensor(const GaussianTensor&, double)> leaky_relu;
};

FilterKernels kernels_for(Fault fault);

struct CheckResult {
  std::string name;
  std::string detail;
  double observed = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

struct SelfcheckReport {
  Fault fault = Fault::None;
  std::vector<CheckResult> checks;

  bool passed() const;
  std::vector<std::string> failures() const;
};

SelfcheckReport run_selfcheck(Fault fault = Fault::None, std::uint64_t seed = 0);

nlohmann::json to_json(const SelfcheckReport& report);

}  // namespace lpn
