#pragma once

// Reverse-mode differentiation over a tape of matrix-valued nodes.
//
// Every backward rule is itself built from tape operations, so the gradients
// returned by Tape::grad are ordinary nodes that can be combined into a new
// scalar and differentiated again (reverse-over-reverse). Passes are limited to
// second order: each node records the derivative order it was created at, and a
// gradient of a node that already depends on second-order nodes is rejected.
//
// Values are Eigen::MatrixXd. Elementwise operations require equal shapes;
// broadcasting is explicit (broadcast_rows / broadcast_cols / expand).

#include <cstdint>
#include <deque>
#include <map>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "lpn/adf_moments.hpp"

namespace lpn::ad {

using Tensor = Eigen::MatrixXd;

inline constexpr int kMaxOrder = 2;

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Tensor& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  /// Value of a 1x1 node.
  double scalar() const;
  int order() const;

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

enum class Op : std::uint8_t {
  Leaf,
  Constant,
  Add,
  Sub,
  Mul,
  Div,
  Neg,
  Scale,
  Shift,
  MatMul,
  MatMulNT,
  MatMulTN,
  Transpose,
  Exp,
  Log,
  Sqrt,
  Square,
  Pow,
  NormalPdf,
  NormalCdf,
  AbsSmooth,
  ClampMin,
  SumAll,
  Expand,
  SumRows,
  BroadcastRows,
  SumCols,
  BroadcastCols,
  LeakyFirst,
  LeakySecond,
  GaussCdfMix,
  GaussPdfRatio,
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// A differentiable input.
  Var variable(Tensor value);
  Var constant(Tensor value);
  Var constant(double value);

  /// d output / d x for each x, as tape nodes. `output` must be 1x1.
  /// Inputs that `output` does not depend on get an exact zero constant.
  std::vector<Var> grad(const Var& output, std::span<const Var> inputs);

  std::size_t size() const { return nodes_.size(); }

  const Tensor& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  int order(int id) const { return nodes_[static_cast<std::size_t>(id)].order; }

  /// Phi/phi terms for the (mean, var) node pair, computed once per tape.
  const adf::GaussTerms& gauss_terms(int mean_id, int var_id);

  // Used by the free-function operators below.
  Var record(Op op, int a, int b, double param, Tensor value);

 private:
  struct Node {
    Op op;
    int a;
    int b;
    double param;
    int order;
    Tensor value;
  };

  void backward_rule(int id, const Var& g, std::vector<int>& adjoint,
                     const std::vector<char>& relevant);
  void accumulate(std::vector<int>& adjoint, const std::vector<char>& relevant, int target,
                  const Var& contribution);

  // std::deque keeps references to node values stable while appending.
  std::deque<Node> nodes_;
  std::map<std::pair<int, int>, adf::GaussTerms> gauss_cache_;
  int pass_order_ = 0;
};

Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);
Var operator/(const Var& a, const Var& b);
Var operator-(const Var& a);
Var operator*(double s, const Var& a);
Var operator*(const Var& a, double s);
Var operator/(const Var& a, double s);
Var operator+(const Var& a, double s);
Var operator+(double s, const Var& a);
Var operator-(const Var& a, double s);
Var operator-(double s, const Var& a);

Var matmul(const Var& a, const Var& b);
/// a * b^T and a^T * b without materializing the transpose.
Var matmul_nt(const Var& a, const Var& b);
Var matmul_tn(const Var& a, const Var& b);
Var transpose(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var sqrt(const Var& a);
Var square(const Var& a);
Var pow(const Var& a, double exponent);
Var std_normal_pdf(const Var& a);
Var std_normal_cdf(const Var& a);
/// sqrt(a^2 + eps^2), a smooth |a|.
Var abs_smooth(const Var& a, double eps);
/// max(a, lo) elementwise; the derivative is 0 where a <= lo.
Var clamp_min(const Var& a, double lo);

/// Elementwise Gaussian moment kernels from adf_moments.hpp, with `var`
/// floored at adf::kVarianceFloor; gradients in `var` vanish below the floor.
Var leaky_first_moment(const Var& mean, const Var& var, double slope);
Var leaky_second_moment(const Var& mean, const Var& var, double slope);
Var gauss_cdf_mix(const Var& mean, const Var& var, double p);
Var gauss_pdf_ratio(const Var& mean, const Var& var);

/// Sum of all entries, 1x1.
Var sum(const Var& a);
/// 1x1 -> rows x cols.
Var expand(const Var& a, Eigen::Index rows, Eigen::Index cols);
/// r x c -> 1 x c (column sums).
Var sum_rows(const Var& a);
/// 1 x c -> rows x c.
Var broadcast_rows(const Var& a, Eigen::Index rows);
/// r x c -> r x 1 (row sums).
Var sum_cols(const Var& a);
/// r x 1 -> r x cols.
Var broadcast_cols(const Var& a, Eigen::Index cols);

/// Gradient values of a scalar output with respect to `inputs`.
std::vector<Tensor> gradient(const Var& output, std::span<const Var> inputs);

/// Gradient values of a scalar assembled from first-order gradient nodes.
/// Identical to gradient() except it documents (and checks) that `output`
/// already depends on a first-order pass.
std::vector<Tensor> gradient_of_gradient(const Var& output, std::span<const Var> inputs);

}  // namespace lpn::ad
