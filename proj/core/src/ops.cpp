#include <algorithm>
#include <cmath>

#include <Eigen/Core>

#include "rmaml/autodiff.hpp"
#include "rmaml/error.hpp"

namespace rmaml::ad {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void require_same_shape(const char* what, const Array& a, const Array& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shapes " + to_string(a.shape()) + " and " +
                     to_string(b.shape()) + " differ");
  }
}

void require_matrix(const char* what, const Array& a) {
  if (a.rank() != 2) {
    throw ShapeError(std::string(what) + ": expected a matrix, got " + to_string(a.shape()));
  }
}

template <typename F>
Array map_unary(const Array& a, F f) {
  std::vector<double> out(a.size());
  const auto in = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  return Array(a.shape(), std::move(out));
}

template <typename F>
Array map_binary(const char* what, const Array& a, const Array& b, F f) {
  require_same_shape(what, a, b);
  std::vector<double> out(a.size());
  const auto x = a.values();
  const auto y = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i], y[i]);
  return Array(a.shape(), std::move(out));
}

Array matmul_kernel(const Array& a, const Array& b) {
  require_matrix("matmul", a);
  require_matrix("matmul", b);
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions of " + to_string(a.shape()) + " and " +
                     to_string(b.shape()) + " differ");
  }
  const auto n = static_cast<Eigen::Index>(a.rows());
  const auto k = static_cast<Eigen::Index>(a.cols());
  const auto m = static_cast<Eigen::Index>(b.cols());
  std::vector<double> out(static_cast<std::size_t>(n * m));
  Eigen::Map<const RowMajor> lhs(a.values().data(), n, k);
  Eigen::Map<const RowMajor> rhs(b.values().data(), k, m);
  Eigen::Map<RowMajor> dst(out.data(), n, m);
  dst.noalias() = lhs * rhs;
  return Array({a.rows(), b.cols()}, std::move(out));
}

Array transpose_kernel(const Array& a) {
  require_matrix("transpose", a);
  const std::size_t n = a.rows();
  const std::size_t m = a.cols();
  std::vector<double> out(n * m);
  const auto in = a.values();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) out[j * n + i] = in[i * m + j];
  }
  return Array({m, n}, std::move(out));
}

Array broadcast_kernel(const Array& a, const Shape& target) {
  if (a.shape() == target) return a;
  if (a.size() == 1) return Array::filled(target, a[0]);
  if (a.rank() == 2 && target.size() == 2) {
    const std::size_t n = target[0];
    const std::size_t m = target[1];
    std::vector<double> out(n * m);
    const auto in = a.values();
    if (a.rows() == 1 && a.cols() == m) {
      for (std::size_t i = 0; i < n; ++i) std::copy(in.begin(), in.end(), out.begin() + i * m);
      return Array(target, std::move(out));
    }
    if (a.cols() == 1 && a.rows() == n) {
      for (std::size_t i = 0; i < n; ++i) std::fill_n(out.begin() + i * m, m, in[i]);
      return Array(target, std::move(out));
    }
  }
  throw ShapeError("broadcast_to: cannot broadcast " + to_string(a.shape()) + " to " +
                   to_string(target));
}

Array sum_rows_kernel(const Array& a) {
  require_matrix("sum_rows", a);
  const std::size_t n = a.rows();
  const std::size_t m = a.cols();
  std::vector<double> out(m, 0.0);
  const auto in = a.values();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) out[j] += in[i * m + j];
  }
  return Array({1, m}, std::move(out));
}

Array sum_cols_kernel(const Array& a) {
  require_matrix("sum_cols", a);
  const std::size_t n = a.rows();
  const std::size_t m = a.cols();
  std::vector<double> out(n, 0.0);
  const auto in = a.values();
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j) s += in[i * m + j];
    out[i] = s;
  }
  return Array({n, 1}, std::move(out));
}

Array max_cols_kernel(const Array& a) {
  require_matrix("max_cols", a);
  const std::size_t n = a.rows();
  const std::size_t m = a.cols();
  std::vector<double> out(n);
  const auto in = a.values();
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = *std::max_element(in.begin() + static_cast<std::ptrdiff_t>(i * m),
                               in.begin() + static_cast<std::ptrdiff_t>((i + 1) * m));
  }
  return Array({n, 1}, std::move(out));
}

double sum_all(const Array& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  return s;
}

Graph* common_graph(const Tensor& a, const Tensor& b) {
  Graph* g = a.graph();
  if (b.graph() != nullptr) {
    if (g != nullptr && g != b.graph()) throw Error("tensors belong to different graphs");
    g = b.graph();
  }
  return g;
}

Tensor apply(Op op, const Tensor& a, Attrs attrs = {}) {
  if (!a.valid()) throw Error(std::string(op_name(op)) + ": invalid tensor");
  if (Graph* g = a.graph()) return g->record(op, a, std::move(attrs));
  return Tensor(evaluate(op, &a.value(), nullptr, attrs));
}

Tensor apply(Op op, const Tensor& a, const Tensor& b, Attrs attrs = {}) {
  if (!a.valid() || !b.valid()) throw Error(std::string(op_name(op)) + ": invalid tensor");
  if (Graph* g = common_graph(a, b)) return g->record(op, a, b, std::move(attrs));
  return Tensor(evaluate(op, &a.value(), &b.value(), attrs));
}

Tensor apply_elementwise(Op op, const Tensor& a, const Tensor& b) {
  if (!a.valid() || !b.valid()) throw Error(std::string(op_name(op)) + ": invalid tensor");
  if (a.shape() == b.shape()) return apply(op, a, b);
  if (b.size() == 1) return apply(op, a, broadcast_to(b, a.shape()));
  if (a.size() == 1) return apply(op, broadcast_to(a, b.shape()), b);
  throw ShapeError(std::string(op_name(op)) + ": shapes " + to_string(a.shape()) + " and " +
                   to_string(b.shape()) + " are not compatible");
}

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::Constant: return "constant";
    case Op::Input: return "input";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Div: return "div";
    case Op::Neg: return "neg";
    case Op::Scale: return "scale";
    case Op::Shift: return "shift";
    case Op::MatMul: return "matmul";
    case Op::Transpose: return "transpose";
    case Op::Reshape: return "reshape";
    case Op::BroadcastTo: return "broadcast_to";
    case Op::Relu: return "relu";
    case Op::Tanh: return "tanh";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Sign: return "sign";
    case Op::Clip: return "clip";
    case Op::Sum: return "sum";
    case Op::Mean: return "mean";
    case Op::SumRows: return "sum_rows";
    case Op::SumCols: return "sum_cols";
    case Op::MaxCols: return "max_cols";
    case Op::StopGradient: return "stop_gradient";
  }
  return "unknown";
}

Array evaluate(Op op, const Array* lhs, const Array* rhs, const Attrs& attrs) {
  const Array& a = *lhs;
  switch (op) {
    case Op::Constant:
    case Op::Input:
      throw Error("leaf nodes have no evaluation rule");
    case Op::Add: return map_binary("add", a, *rhs, [](double x, double y) { return x + y; });
    case Op::Sub: return map_binary("sub", a, *rhs, [](double x, double y) { return x - y; });
    case Op::Mul: return map_binary("mul", a, *rhs, [](double x, double y) { return x * y; });
    case Op::Div: return map_binary("div", a, *rhs, [](double x, double y) { return x / y; });
    case Op::Neg: return map_unary(a, [](double x) { return -x; });
    case Op::Scale: return map_unary(a, [c = attrs.a](double x) { return x * c; });
    case Op::Shift: return map_unary(a, [c = attrs.a](double x) { return x + c; });
    case Op::MatMul: return matmul_kernel(a, *rhs);
    case Op::Transpose: return transpose_kernel(a);
    case Op::Reshape: return a.reshaped(attrs.shape);
    case Op::BroadcastTo: return broadcast_kernel(a, attrs.shape);
    case Op::Relu: return map_unary(a, [](double x) { return x > 0.0 ? x : 0.0; });
    case Op::Tanh: return map_unary(a, [](double x) { return std::tanh(x); });
    case Op::Exp: return map_unary(a, [](double x) { return std::exp(x); });
    case Op::Log: return map_unary(a, [](double x) { return std::log(x); });
    case Op::Sign:
      return map_unary(a, [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
    case Op::Clip:
      return map_unary(a, [lo = attrs.a, hi = attrs.b](double x) { return std::clamp(x, lo, hi); });
    case Op::Sum: return Array::scalar(sum_all(a));
    case Op::Mean: return Array::scalar(sum_all(a) / static_cast<double>(a.size()));
    case Op::SumRows: return sum_rows_kernel(a);
    case Op::SumCols: return sum_cols_kernel(a);
    case Op::MaxCols: return max_cols_kernel(a);
    case Op::StopGradient: return a;
  }
  throw Error("unknown op");
}

Tensor add(const Tensor& a, const Tensor& b) { return apply_elementwise(Op::Add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return apply_elementwise(Op::Sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return apply_elementwise(Op::Mul, a, b); }
Tensor div(const Tensor& a, const Tensor& b) { return apply_elementwise(Op::Div, a, b); }

Tensor neg(const Tensor& a) { return apply(Op::Neg, a); }
Tensor scale(const Tensor& a, double factor) { return apply(Op::Scale, a, Attrs{factor, 0.0, {}}); }
Tensor shift(const Tensor& a, double offset) { return apply(Op::Shift, a, Attrs{offset, 0.0, {}}); }

Tensor matmul(const Tensor& a, const Tensor& b) { return apply(Op::MatMul, a, b); }
Tensor transpose(const Tensor& a) { return apply(Op::Transpose, a); }

Tensor reshape(const Tensor& a, Shape shape) {
  if (a.valid() && a.shape() == shape) return a;
  return apply(Op::Reshape, a, Attrs{0.0, 0.0, std::move(shape)});
}

Tensor broadcast_to(const Tensor& a, Shape shape) {
  if (a.valid() && a.shape() == shape) return a;
  return apply(Op::BroadcastTo, a, Attrs{0.0, 0.0, std::move(shape)});
}

Tensor relu(const Tensor& a) { return apply(Op::Relu, a); }
Tensor tanh(const Tensor& a) { return apply(Op::Tanh, a); }
Tensor exp(const Tensor& a) { return apply(Op::Exp, a); }
Tensor log(const Tensor& a) { return apply(Op::Log, a); }
Tensor sign(const Tensor& a) { return apply(Op::Sign, a); }

Tensor clip(const Tensor& a, double lo, double hi) {
  if (lo > hi) throw ConfigError("clip: lower bound exceeds upper bound");
  return apply(Op::Clip, a, Attrs{lo, hi, {}});
}

Tensor sum(const Tensor& a) { return apply(Op::Sum, a); }
Tensor mean(const Tensor& a) { return apply(Op::Mean, a); }
Tensor sum_rows(const Tensor& a) { return apply(Op::SumRows, a); }
Tensor sum_cols(const Tensor& a) { return apply(Op::SumCols, a); }
Tensor max_cols(const Tensor& a) { return apply(Op::MaxCols, a); }
Tensor stop_gradient(const Tensor& a) { return apply(Op::StopGradient, a); }

Tensor log_softmax(const Tensor& logits) {
  // x - m - log(sum(exp(x - m))) with the row max m held constant.
  const Shape shape = logits.shape();
  const Tensor shifted = logits - broadcast_to(stop_gradient(max_cols(logits)), shape);
  const Tensor lse = log(sum_cols(exp(shifted)));
  return shifted - broadcast_to(lse, shape);
}

Tensor softmax(const Tensor& logits) {
  const Shape shape = logits.shape();
  const Tensor e = exp(logits - broadcast_to(stop_gradient(max_cols(logits)), shape));
  return e / broadcast_to(sum_cols(e), shape);
}

}  // namespace rmaml::ad
