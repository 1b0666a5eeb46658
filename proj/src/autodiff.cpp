#include "lpn/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lpn/errors.hpp"
#include "lpn/gaussian.hpp"

namespace lpn::ad {

namespace {

Tape* tape_of(const Var& a) {
  if (!a.valid()) throw UsageError("autodiff: operation on an empty Var");
  return a.tape();
}

Tape* tape_of(const Var& a, const Var& b) {
  Tape* t = tape_of(a);
  if (tape_of(b) != t) throw UsageError("autodiff: operands live on different tapes");
  return t;
}

std::string shape(const Tensor& t) {
  return std::to_string(t.rows()) + "x" + std::to_string(t.cols());
}

void require_same_shape(const char* op, const Var& a, const Var& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ConfigError(std::string("autodiff ") + op + ": shape mismatch " + shape(a.value()) +
                      " vs " + shape(b.value()));
  }
}

Var unary(Op op, const Var& a, double param, Tensor value) {
  return tape_of(a)->record(op, a.id(), -1, param, std::move(value));
}

Var binary(Op op, const Var& a, const Var& b, Tensor value) {
  return tape_of(a, b)->record(op, a.id(), b.id(), 0.0, std::move(value));
}

template <class F>
Var gaussian_op(Op op, const Var& mean, const Var& var, double param, F kernel) {
  require_same_shape("gaussian kernel", mean, var);
  Tape* tape = tape_of(mean, var);
  Tensor value = kernel(tape->gauss_terms(mean.id(), var.id())).matrix();
  return tape->record(op, mean.id(), var.id(), param, std::move(value));
}

// Zeroes a variance-gradient where the kernel saw the floor instead of var.
Var below_floor_masked(const Var& g, const Var& var) {
  const auto above = var.value().array() >= adf::kVarianceFloor;
  if (above.all()) return g;
  return g * g.tape()->constant(above.cast<double>().matrix());
}

}  // namespace

const Tensor& Var::value() const { return tape_of(*this)->value(id_); }

double Var::scalar() const {
  const Tensor& v = value();
  if (v.size() != 1) throw UsageError("autodiff: scalar() on a " + shape(v) + " node");
  return v(0, 0);
}

int Var::order() const { return tape_of(*this)->order(id_); }

Var Tape::variable(Tensor value) { return record(Op::Leaf, -1, -1, 0.0, std::move(value)); }

Var Tape::constant(Tensor value) { return record(Op::Constant, -1, -1, 0.0, std::move(value)); }

Var Tape::constant(double value) { return constant(Tensor::Constant(1, 1, value)); }

const adf::GaussTerms& Tape::gauss_terms(int mean_id, int var_id) {
  const auto key = std::make_pair(mean_id, var_id);
  auto it = gauss_cache_.find(key);
  if (it == gauss_cache_.end()) {
    it = gauss_cache_.emplace(key, adf::gauss_terms(value(mean_id).array(), value(var_id).array())).first;
  }
  return it->second;
}

Var Tape::record(Op op, int a, int b, double param, Tensor value) {
  int order = pass_order_;
  if (a >= 0) order = std::max(order, nodes_[static_cast<std::size_t>(a)].order);
  if (b >= 0) order = std::max(order, nodes_[static_cast<std::size_t>(b)].order);
  nodes_.push_back(Node{op, a, b, param, order, std::move(value)});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::accumulate(std::vector<int>& adjoint, const std::vector<char>& relevant, int target,
                      const Var& contribution) {
  if (target < 0 || !relevant[static_cast<std::size_t>(target)]) return;
  int& slot = adjoint[static_cast<std::size_t>(target)];
  if (slot < 0) {
    slot = contribution.id();
  } else {
    slot = (Var(this, slot) + contribution).id();
  }
}

void Tape::backward_rule(int id, const Var& g, std::vector<int>& adjoint,
                         const std::vector<char>& relevant) {
  // Copy what we need: appending nodes below may not move deque elements, but
  // keeping the rule free of references into nodes_ is simpler to audit.
  const Node& node_ref = nodes_[static_cast<std::size_t>(id)];
  const Op op = node_ref.op;
  const int ia = node_ref.a;
  const int ib = node_ref.b;
  const double param = node_ref.param;

  const Var out(this, id);
  const Var a = ia >= 0 ? Var(this, ia) : Var();
  const Var b = ib >= 0 ? Var(this, ib) : Var();
  auto wants = [&](int parent) { return parent >= 0 && relevant[static_cast<std::size_t>(parent)]; };
  auto push = [&](int parent, auto&& make) {
    if (wants(parent)) accumulate(adjoint, relevant, parent, make());
  };

  switch (op) {
    case Op::Leaf:
    case Op::Constant:
      break;
    case Op::Add:
      push(ia, [&] { return g; });
      push(ib, [&] { return g; });
      break;
    case Op::Sub:
      push(ia, [&] { return g; });
      push(ib, [&] { return -g; });
      break;
    case Op::Mul:
      push(ia, [&] { return g * b; });
      push(ib, [&] { return g * a; });
      break;
    case Op::Div:
      push(ia, [&] { return g / b; });
      push(ib, [&] { return -(g * out / b); });
      break;
    case Op::Neg:
      push(ia, [&] { return -g; });
      break;
    case Op::Scale:
      push(ia, [&] { return param * g; });
      break;
    case Op::Shift:
      push(ia, [&] { return g; });
      break;
    case Op::MatMul:
      push(ia, [&] { return matmul_nt(g, b); });
      push(ib, [&] { return matmul_tn(a, g); });
      break;
    case Op::MatMulNT:
      push(ia, [&] { return matmul(g, b); });
      push(ib, [&] { return matmul_tn(g, a); });
      break;
    case Op::MatMulTN:
      push(ia, [&] { return matmul_nt(b, g); });
      push(ib, [&] { return matmul(a, g); });
      break;
    case Op::Transpose:
      push(ia, [&] { return transpose(g); });
      break;
    case Op::Exp:
      push(ia, [&] { return g * out; });
      break;
    case Op::Log:
      push(ia, [&] { return g / a; });
      break;
    case Op::Sqrt:
      push(ia, [&] { return 0.5 * (g / out); });
      break;
    case Op::Square:
      push(ia, [&] { return 2.0 * (g * a); });
      break;
    case Op::Pow:
      push(ia, [&] { return param * (g * pow(a, param - 1.0)); });
      break;
    case Op::NormalPdf:
      push(ia, [&] { return -(g * (a * out)); });
      break;
    case Op::NormalCdf:
      push(ia, [&] { return g * std_normal_pdf(a); });
      break;
    case Op::AbsSmooth:
      push(ia, [&] { return g * (a / out); });
      break;
    case Op::ClampMin:
      push(ia, [&] {
        const Tensor mask = (a.value().array() > param).cast<double>().matrix();
        return g * constant(mask);
      });
      break;
    case Op::SumAll:
      push(ia, [&] { return expand(g, a.rows(), a.cols()); });
      break;
    case Op::Expand:
      push(ia, [&] { return sum(g); });
      break;
    case Op::SumRows:
      push(ia, [&] { return broadcast_rows(g, a.rows()); });
      break;
    case Op::BroadcastRows:
      push(ia, [&] { return sum_rows(g); });
      break;
    case Op::SumCols:
      push(ia, [&] { return broadcast_cols(g, a.cols()); });
      break;
    case Op::BroadcastCols:
      push(ia, [&] { return sum_cols(g); });
      break;
    case Op::LeakyFirst:
      push(ia, [&] { return g * gauss_cdf_mix(a, b, param); });
      push(ib, [&] {
        return below_floor_masked((0.5 * (1.0 - param)) * (g * gauss_pdf_ratio(a, b)), b);
      });
      break;
    case Op::LeakySecond:
      push(ia, [&] { return 2.0 * (g * leaky_first_moment(a, b, param * param)); });
      push(ib, [&] { return below_floor_masked(g * gauss_cdf_mix(a, b, param * param), b); });
      break;
    case Op::GaussCdfMix:
      push(ia, [&] { return (1.0 - param) * (g * gauss_pdf_ratio(a, b)); });
      push(ib, [&] {
        const Var nu = clamp_min(b, adf::kVarianceFloor);
        return below_floor_masked((-0.5 * (1.0 - param)) * (g * gauss_pdf_ratio(a, b) * a / nu), b);
      });
      break;
    case Op::GaussPdfRatio:
      push(ia, [&] { return -(g * out * a / clamp_min(b, adf::kVarianceFloor)); });
      push(ib, [&] {
        const Var nu = clamp_min(b, adf::kVarianceFloor);
        return below_floor_masked(0.5 * (g * out * (square(a) / nu - 1.0) / nu), b);
      });
      break;
  }
}

std::vector<Var> Tape::grad(const Var& output, std::span<const Var> inputs) {
  if (tape_of(output) != this) throw UsageError("autodiff: output belongs to another tape");
  if (output.value().size() != 1) {
    throw UsageError("autodiff: gradient needs a scalar output, got " + shape(output.value()));
  }
  const int pass = output.order() + 1;
  if (pass > kMaxOrder) {
    throw UnsupportedOrderError("autodiff: derivatives beyond second order are not supported");
  }

  const auto n = static_cast<std::size_t>(output.id()) + 1;
  std::vector<char> relevant(n, 0);
  for (const Var& x : inputs) {
    if (tape_of(x) != this) throw UsageError("autodiff: input belongs to another tape");
    if (static_cast<std::size_t>(x.id()) < n) relevant[static_cast<std::size_t>(x.id())] = 1;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (relevant[i]) continue;
    const Node& node = nodes_[i];
    if ((node.a >= 0 && relevant[static_cast<std::size_t>(node.a)]) ||
        (node.b >= 0 && relevant[static_cast<std::size_t>(node.b)])) {
      relevant[i] = 1;
    }
  }

  const int saved_order = pass_order_;
  pass_order_ = pass;
  std::vector<int> adjoint(n, -1);
  try {
    if (relevant[n - 1]) adjoint[n - 1] = constant(Tensor::Ones(1, 1)).id();
    for (std::size_t i = n; i-- > 0;) {
      if (adjoint[i] < 0 || !relevant[i]) continue;
      backward_rule(static_cast<int>(i), Var(this, adjoint[i]), adjoint, relevant);
    }
  } catch (...) {
    pass_order_ = saved_order;
    throw;
  }

  std::vector<Var> result;
  result.reserve(inputs.size());
  for (const Var& x : inputs) {
    const auto xi = static_cast<std::size_t>(x.id());
    if (xi < n && adjoint[xi] >= 0) {
      result.push_back(Var(this, adjoint[xi]));
    } else {
      result.push_back(constant(Tensor::Zero(x.rows(), x.cols())));
    }
  }
  pass_order_ = saved_order;
  return result;
}

Var operator+(const Var& a, const Var& b) {
  require_same_shape("add", a, b);
  return binary(Op::Add, a, b, a.value() + b.value());
}

Var operator-(const Var& a, const Var& b) {
  require_same_shape("sub", a, b);
  return binary(Op::Sub, a, b, a.value() - b.value());
}

Var operator*(const Var& a, const Var& b) {
  require_same_shape("mul", a, b);
  return binary(Op::Mul, a, b, a.value().cwiseProduct(b.value()));
}

Var operator/(const Var& a, const Var& b) {
  require_same_shape("div", a, b);
  return binary(Op::Div, a, b, a.value().cwiseQuotient(b.value()));
}

Var operator-(const Var& a) { return unary(Op::Neg, a, 0.0, -a.value()); }

Var operator*(double s, const Var& a) { return unary(Op::Scale, a, s, s * a.value()); }
Var operator*(const Var& a, double s) { return s * a; }
Var operator/(const Var& a, double s) { return (1.0 / s) * a; }

Var operator+(const Var& a, double s) {
  return unary(Op::Shift, a, s, (a.value().array() + s).matrix());
}
Var operator+(double s, const Var& a) { return a + s; }
Var operator-(const Var& a, double s) { return a + (-s); }
Var operator-(double s, const Var& a) { return (-a) + s; }

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) {
    throw ConfigError("autodiff matmul: shape mismatch " + shape(a.value()) + " * " +
                      shape(b.value()));
  }
  return binary(Op::MatMul, a, b, a.value() * b.value());
}

Var matmul_nt(const Var& a, const Var& b) {
  if (a.cols() != b.cols()) {
    throw ConfigError("autodiff matmul_nt: shape mismatch " + shape(a.value()) + " * " +
                      shape(b.value()) + "^T");
  }
  return binary(Op::MatMulNT, a, b, a.value() * b.value().transpose());
}

Var matmul_tn(const Var& a, const Var& b) {
  if (a.rows() != b.rows()) {
    throw ConfigError("autodiff matmul_tn: shape mismatch " + shape(a.value()) + "^T * " +
                      shape(b.value()));
  }
  return binary(Op::MatMulTN, a, b, a.value().transpose() * b.value());
}

Var transpose(const Var& a) { return unary(Op::Transpose, a, 0.0, a.value().transpose()); }

Var exp(const Var& a) { return unary(Op::Exp, a, 0.0, a.value().array().exp().matrix()); }

Var log(const Var& a) { return unary(Op::Log, a, 0.0, a.value().array().log().matrix()); }

Var sqrt(const Var& a) { return unary(Op::Sqrt, a, 0.0, a.value().array().sqrt().matrix()); }

Var square(const Var& a) {
  return unary(Op::Square, a, 0.0, a.value().array().square().matrix());
}

Var pow(const Var& a, double exponent) {
  return unary(Op::Pow, a, exponent, a.value().array().pow(exponent).matrix());
}

Var std_normal_pdf(const Var& a) {
  return unary(Op::NormalPdf, a, 0.0, adf::std_normal_pdf(a.value().array()).matrix());
}

Var std_normal_cdf(const Var& a) {
  return unary(Op::NormalCdf, a, 0.0, adf::std_normal_cdf(a.value().array()).matrix());
}

Var abs_smooth(const Var& a, double eps) {
  return unary(Op::AbsSmooth, a, eps, (a.value().array().square() + eps * eps).sqrt().matrix());
}

Var clamp_min(const Var& a, double lo) {
  return unary(Op::ClampMin, a, lo, a.value().array().max(lo).matrix());
}

Var leaky_first_moment(const Var& mean, const Var& var, double slope) {
  return gaussian_op(Op::LeakyFirst, mean, var, slope, [&](const adf::GaussTerms& t) {
    return adf::leaky_first_moment(mean.value().array(), t, slope);
  });
}

Var leaky_second_moment(const Var& mean, const Var& var, double slope) {
  return gaussian_op(Op::LeakySecond, mean, var, slope, [&](const adf::GaussTerms& t) {
    return adf::leaky_second_moment(mean.value().array(), t, slope);
  });
}

Var gauss_cdf_mix(const Var& mean, const Var& var, double p) {
  return gaussian_op(Op::GaussCdfMix, mean, var, p,
                     [&](const adf::GaussTerms& t) { return adf::gauss_cdf_mix(t, p); });
}

Var gauss_pdf_ratio(const Var& mean, const Var& var) {
  return gaussian_op(Op::GaussPdfRatio, mean, var, 0.0,
                     [](const adf::GaussTerms& t) { return adf::gauss_pdf_ratio(t); });
}

Var sum(const Var& a) { return unary(Op::SumAll, a, 0.0, Tensor::Constant(1, 1, a.value().sum())); }

Var expand(const Var& a, Eigen::Index rows, Eigen::Index cols) {
  if (a.value().size() != 1) throw ConfigError("autodiff expand: input must be 1x1");
  return unary(Op::Expand, a, 0.0, Tensor::Constant(rows, cols, a.value()(0, 0)));
}

Var sum_rows(const Var& a) { return unary(Op::SumRows, a, 0.0, a.value().colwise().sum()); }

Var broadcast_rows(const Var& a, Eigen::Index rows) {
  if (a.rows() != 1) throw ConfigError("autodiff broadcast_rows: input must be a row vector");
  return unary(Op::BroadcastRows, a, 0.0, a.value().replicate(rows, 1));
}

Var sum_cols(const Var& a) { return unary(Op::SumCols, a, 0.0, a.value().rowwise().sum()); }

Var broadcast_cols(const Var& a, Eigen::Index cols) {
  if (a.cols() != 1) throw ConfigError("autodiff broadcast_cols: input must be a column vector");
  return unary(Op::BroadcastCols, a, 0.0, a.value().replicate(1, cols));
}

std::vector<Tensor> gradient(const Var& output, std::span<const Var> inputs) {
  std::vector<Var> grads = tape_of(output)->grad(output, inputs);
  std::vector<Tensor> values;
  values.reserve(grads.size());
  for (const Var& g : grads) values.push_back(g.value());
  return values;
}

std::vector<Tensor> gradient_of_gradient(const Var& output, std::span<const Var> inputs) {
  if (output.order() < 1) {
    throw UsageError("autodiff: gradient_of_gradient needs a scalar built from gradient nodes");
  }
  return gradient(output, inputs);
}

}  // namespace lpn::ad
